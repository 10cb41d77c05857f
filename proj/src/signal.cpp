#include "rppg/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "rppg/errors.hpp"
#include "rppg/fft.hpp"

namespace rppg {

namespace {

void check_signal(const RppgSignal& s, const char* where) {
  if (s.samples.size() < 2) {
    throw ContractError(std::string(where) + ": signal must have at least 2 samples");
  }
  if (!(s.fs > 0.0) || !std::isfinite(s.fs)) {
    throw ContractError(std::string(where) + ": sample rate must be finite and positive");
  }
}

// Symmetric positive-definite banded system A x = b with half-bandwidth 2,
// solved via an in-place banded Cholesky factorization. bands[d][i] holds
// A(i, i+d).
std::vector<double> solve_banded_spd(std::array<std::vector<double>, 3> bands,
                                     std::vector<double> rhs) {
  const int64_t n = static_cast<int64_t>(rhs.size());
  auto band_at = [&bands, n](int64_t i, int64_t j) -> double& {
    // j >= i, j - i <= 2
    return bands[static_cast<size_t>(j - i)][static_cast<size_t>(i)];
  };
  // A = L D L' with unit lower-triangular L stored in the band slots.
  for (int64_t j = 0; j < n; ++j) {
    for (int64_t k = std::max<int64_t>(0, j - 2); k < j; ++k) {
      const double ljk = band_at(k, j);
      for (int64_t i = j; i <= std::min(n - 1, k + 2); ++i) {
        band_at(j, i) -= band_at(k, i) * ljk * band_at(k, k);
      }
    }
    const double d = band_at(j, j);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NumericError("detrend system is not positive definite");
    }
    for (int64_t i = j + 1; i <= std::min(n - 1, j + 2); ++i) band_at(j, i) /= d;
  }
  // Forward substitution L y = b (unit diagonal, L(i,j) stored at band(j,i)).
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = std::max<int64_t>(0, i - 2); j < i; ++j) {
      rhs[static_cast<size_t>(i)] -= band_at(j, i) * rhs[static_cast<size_t>(j)];
    }
  }
  // Diagonal scaling.
  for (int64_t i = 0; i < n; ++i) rhs[static_cast<size_t>(i)] /= band_at(i, i);
  // Back substitution L' x = y.
  for (int64_t i = n - 1; i >= 0; --i) {
    for (int64_t j = i + 1; j <= std::min(n - 1, i + 2); ++j) {
      rhs[static_cast<size_t>(i)] -= band_at(i, j) * rhs[static_cast<size_t>(j)];
    }
  }
  return rhs;
}

}  // namespace

std::array<RppgSignal, 3> spatial_mean_rgb(const VideoClip& clip) {
  const int64_t t_ext = clip.frame_count();
  const int64_t pixels = clip.height() * clip.width();
  const double inv = 1.0 / static_cast<double>(pixels);
  std::array<RppgSignal, 3> traces;
  for (auto& tr : traces) {
    tr.samples.resize(static_cast<size_t>(t_ext));
    tr.fs = clip.fps;
  }
  const double* p = clip.frames.data().data();
  for (int64_t t = 0; t < t_ext; ++t) {
    double acc[3] = {0.0, 0.0, 0.0};
    const double* frame = p + t * pixels * 3;
    for (int64_t i = 0; i < pixels; ++i) {
      acc[0] += frame[3 * i];
      acc[1] += frame[3 * i + 1];
      acc[2] += frame[3 * i + 2];
    }
    for (int c = 0; c < 3; ++c) traces[static_cast<size_t>(c)].samples[static_cast<size_t>(t)] = acc[c] * inv;
  }
  return traces;
}

double detrend_lambda(double fs) { return 10.0 * fs; }

RppgSignal detrend(const RppgSignal& signal, double lambda) {
  check_signal(signal, "detrend");
  if (!(lambda > 0.0)) throw ConfigError("detrend lambda must be positive");
  const int64_t n = static_cast<int64_t>(signal.samples.size());
  if (n < 3) throw ContractError("detrend needs at least 3 samples");

  // Bands of I + lambda^2 D2'D2; D2 rows are [1, -2, 1].
  const double l2 = lambda * lambda;
  std::array<std::vector<double>, 3> bands;
  bands[0].assign(static_cast<size_t>(n), 1.0);
  bands[1].assign(static_cast<size_t>(n), 0.0);
  bands[2].assign(static_cast<size_t>(n), 0.0);
  for (int64_t r = 0; r + 2 < n; ++r) {
    const double row[3] = {1.0, -2.0, 1.0};
    for (int64_t a = 0; a < 3; ++a) {
      for (int64_t b = a; b < 3; ++b) {
        bands[static_cast<size_t>(b - a)][static_cast<size_t>(r + a)] +=
            l2 * row[a] * row[b];
      }
    }
  }
  std::vector<double> trend = solve_banded_spd(std::move(bands), signal.samples);
  RppgSignal out;
  out.fs = signal.fs;
  out.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    out.samples[static_cast<size_t>(i)] =
        signal.samples[static_cast<size_t>(i)] - trend[static_cast<size_t>(i)];
  }
  return out;
}

RppgSignal bandpass(const RppgSignal& signal, double lo_hz, double hi_hz) {
  check_signal(signal, "bandpass");
  if (!(lo_hz > 0.0) || !(lo_hz < hi_hz) || !(hi_hz < signal.fs / 2.0)) {
    throw ConfigError("bandpass band must satisfy 0 < lo < hi < fs/2");
  }
  const size_t n = signal.samples.size();
  std::vector<std::complex<double>> spec = fft_real(signal.samples);
  for (size_t k = 0; k < n; ++k) {
    const size_t sym = std::min(k, n - k);
    const double f = static_cast<double>(sym) * signal.fs / static_cast<double>(n);
    if (f < lo_hz || f > hi_hz) spec[k] = {0.0, 0.0};
  }
  RppgSignal out;
  out.fs = signal.fs;
  out.samples = ifft_real(std::move(spec));
  return out;
}

int64_t welch_segment_length(int64_t signal_len, double fs) {
  const int64_t target = std::max<int64_t>(8, std::llround(20.0 * fs));
  return std::min(signal_len, target);
}

SpectralEstimate power_spectrum(const RppgSignal& signal) {
  check_signal(signal, "power_spectrum");
  const int64_t n = static_cast<int64_t>(signal.samples.size());
  if (n < 8) throw ContractError("power_spectrum needs at least 8 samples");

  double mean = 0.0;
  for (double v : signal.samples) mean += v;
  mean /= static_cast<double>(n);

  const int64_t seg = welch_segment_length(n, signal.fs);
  const int64_t hop = std::max<int64_t>(1, seg / 2);

  // Periodic Hann window.
  std::vector<double> window(static_cast<size_t>(seg));
  double window_power = 0.0;
  for (int64_t i = 0; i < seg; ++i) {
    const double w =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                              static_cast<double>(seg)));
    window[static_cast<size_t>(i)] = w;
    window_power += w * w;
  }

  const int64_t bins = seg / 2 + 1;
  std::vector<double> acc(static_cast<size_t>(bins), 0.0);
  int64_t segments = 0;
  std::vector<double> buf(static_cast<size_t>(seg));
  for (int64_t start = 0; start + seg <= n; start += hop) {
    for (int64_t i = 0; i < seg; ++i) {
      buf[static_cast<size_t>(i)] =
          (signal.samples[static_cast<size_t>(start + i)] - mean) *
          window[static_cast<size_t>(i)];
    }
    const auto spec = fft_real(buf);
    for (int64_t k = 0; k < bins; ++k) {
      acc[static_cast<size_t>(k)] += std::norm(spec[static_cast<size_t>(k)]);
    }
    ++segments;
  }

  SpectralEstimate out;
  out.freqs.resize(static_cast<size_t>(bins));
  out.power.resize(static_cast<size_t>(bins));
  const double density_scale =
      1.0 / (static_cast<double>(segments) * signal.fs * window_power);
  for (int64_t k = 0; k < bins; ++k) {
    out.freqs[static_cast<size_t>(k)] =
        static_cast<double>(k) * signal.fs / static_cast<double>(seg);
    const bool one_sided_double = k != 0 && !(seg % 2 == 0 && k == bins - 1);
    out.power[static_cast<size_t>(k)] =
        acc[static_cast<size_t>(k)] * density_scale * (one_sided_double ? 2.0 : 1.0);
  }
  return out;
}

HrEstimate estimate_hr(const SpectralEstimate& spectrum, double lo_hz, double hi_hz) {
  if (spectrum.freqs.size() != spectrum.power.size() || spectrum.freqs.empty()) {
    throw ContractError("estimate_hr: malformed spectrum");
  }
  if (!(lo_hz <= hi_hz)) throw ConfigError("estimate_hr: band is empty");
  int64_t best = -1;
  double best_power = -1.0;
  double band_total = 0.0;
  for (size_t k = 0; k < spectrum.freqs.size(); ++k) {
    const double f = spectrum.freqs[k];
    if (f < lo_hz || f > hi_hz) continue;
    const double p = spectrum.power[k];
    band_total += p;
    if (p > best_power) {
      best_power = p;
      best = static_cast<int64_t>(k);
    }
  }
  if (best < 0) {
    throw ConfigError("estimate_hr: band [" + std::to_string(lo_hz) + ", " +
                      std::to_string(hi_hz) + "] contains no spectral bin");
  }
  HrEstimate hr;
  hr.peak_freq = spectrum.freqs[static_cast<size_t>(best)];
  hr.bpm = 60.0 * hr.peak_freq;
  hr.confidence = band_total > 0.0 ? std::min(1.0, best_power / band_total) : 0.0;
  return hr;
}

HrEstimate hr_from_trace(const RppgSignal& signal, double lo_hz, double hi_hz) {
  const RppgSignal flat = detrend(signal, detrend_lambda(signal.fs));
  const RppgSignal banded = bandpass(flat, lo_hz, hi_hz);
  return estimate_hr(power_spectrum(banded), lo_hz, hi_hz);
}

namespace {

void write_csv(const std::filesystem::path& path, const char* header,
               const std::vector<double>& col_a, const std::vector<double>& col_b) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << header << "\n";
  char line[80];
  for (size_t i = 0; i < col_a.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.9g,%.9g\n", col_a[i], col_b[i]);
    out << line;
  }
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void write_signal_csv(const RppgSignal& signal, const std::filesystem::path& path) {
  std::vector<double> times(signal.samples.size());
  for (size_t i = 0; i < times.size(); ++i) {
    times[i] = static_cast<double>(i) / signal.fs;
  }
  write_csv(path, "t_s,value", times, signal.samples);
}

void write_spectrum_csv(const SpectralEstimate& spectrum, const std::filesystem::path& path) {
  write_csv(path, "freq_hz,power", spectrum.freqs, spectrum.power);
}

}  // namespace rppg
