#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rppg/errors.hpp"
#include "rppg/fft.hpp"
#include "rppg/rng.hpp"
#include "rppg/signal.hpp"
#include "support/oracles.hpp"

using namespace rppg;

namespace {

RppgSignal tone(double freq_hz, double fs, int64_t n, double amp = 1.0, double dc = 0.0) {
  RppgSignal s;
  s.fs = fs;
  s.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    s.samples[static_cast<size_t>(i)] =
        dc + amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / fs);
  }
  return s;
}

double energy(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

VideoClip constant_clip(double r, double g, double b, int64_t t = 4, int64_t h = 3,
                        int64_t w = 3) {
  std::vector<double> values;
  values.reserve(static_cast<size_t>(t * h * w * 3));
  for (int64_t i = 0; i < t * h * w; ++i) {
    values.push_back(r);
    values.push_back(g);
    values.push_back(b);
  }
  return make_clip(Tensor::from_data({t, h, w, 3}, std::move(values)), 30.0);
}

}  // namespace

TEST_CASE("fft matches the direct DFT and inverts exactly") {
  Rng rng(3);
  for (const size_t n : {8ul, 60ul, 37ul, 600ul}) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    const auto fast = fft_real(x);
    const auto ref = oracle::dft_direct(x);
    for (size_t k = 0; k < n; ++k) {
      CHECK(std::abs(fast[k] - ref[k]) <= 1e-9);
    }
    const auto back = ifft_real(fast);
    for (size_t k = 0; k < n; ++k) CHECK(back[k] == doctest::Approx(x[k]).epsilon(1e-12));
  }
}

TEST_CASE("spatial_mean_rgb of a constant clip gives constant traces") {
  const auto traces = spatial_mean_rgb(constant_clip(0.2, 0.5, 0.7));
  for (double v : traces[0].samples) CHECK(v == doctest::Approx(0.2));
  for (double v : traces[1].samples) CHECK(v == doctest::Approx(0.5));
  for (double v : traces[2].samples) CHECK(v == doctest::Approx(0.7));
  CHECK(traces[0].fs == 30.0);
}

TEST_CASE("spatial_mean_rgb reproduces a uniform green sinusoid exactly") {
  const int64_t t_ext = 90;
  const double fs = 30.0;
  std::vector<double> values;
  std::vector<double> expected;
  for (int64_t t = 0; t < t_ext; ++t) {
    const double g =
        0.5 + 0.1 * std::sin(2.0 * std::numbers::pi * 1.2 * static_cast<double>(t) / fs);
    expected.push_back(g);
    for (int64_t p = 0; p < 4 * 4; ++p) {
      values.push_back(0.3);
      values.push_back(g);
      values.push_back(0.4);
    }
  }
  const VideoClip clip = make_clip(Tensor::from_data({t_ext, 4, 4, 3}, std::move(values)), fs);
  const auto traces = spatial_mean_rgb(clip);
  for (int64_t t = 0; t < t_ext; ++t) {
    CHECK(traces[1].samples[static_cast<size_t>(t)] ==
          doctest::Approx(expected[static_cast<size_t>(t)]).epsilon(1e-14));
  }
}

TEST_CASE("spatial_mean_rgb matches a brute-force average") {
  Rng rng(12);
  std::vector<double> values(static_cast<size_t>(5 * 6 * 7 * 3));
  for (double& v : values) v = rng.uniform();
  const VideoClip clip = make_clip(Tensor::from_data({5, 6, 7, 3}, values), 20.0);
  const auto traces = spatial_mean_rgb(clip);
  for (int64_t t = 0; t < 5; ++t) {
    for (int64_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int64_t y = 0; y < 6; ++y) {
        for (int64_t x = 0; x < 7; ++x) {
          acc += values[static_cast<size_t>(((t * 6 + y) * 7 + x) * 3 + c)];
        }
      }
      CHECK(std::abs(traces[static_cast<size_t>(c)].samples[static_cast<size_t>(t)] -
                     acc / 42.0) <= 1e-12);
    }
  }
}

TEST_CASE("detrend kills constants and matches the dense oracle") {
  RppgSignal constant;
  constant.fs = 30.0;
  constant.samples.assign(120, 0.8);
  const RppgSignal flat = detrend(constant, 300.0);
  for (double v : flat.samples) CHECK(std::abs(v) <= 1e-9);

  Rng rng(9);
  RppgSignal noisy;
  noisy.fs = 30.0;
  noisy.samples.resize(200);
  for (double& v : noisy.samples) v = rng.uniform(-1.0, 1.0);
  const RppgSignal mine = detrend(noisy, 300.0);
  const auto ref = oracle::detrend_dense_reference(noisy.samples, 300.0);
  for (size_t i = 0; i < ref.size(); ++i) {
    CHECK(std::abs(mine.samples[i] - ref[i]) <= 1e-9);
  }
}

TEST_CASE("detrend flattens a linear ramp") {
  RppgSignal ramp;
  ramp.fs = 30.0;
  const int64_t n = 300;
  ramp.samples.resize(static_cast<size_t>(n));
  const double amplitude = 2.0;
  for (int64_t i = 0; i < n; ++i) {
    ramp.samples[static_cast<size_t>(i)] =
        amplitude * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  const RppgSignal flat = detrend(ramp, 300.0);
  const auto ref = oracle::detrend_dense_reference(ramp.samples, 300.0);
  for (int64_t i = n / 10; i < n - n / 10; ++i) {
    CHECK(std::abs(flat.samples[static_cast<size_t>(i)]) <= 1e-6 * amplitude);
    CHECK(std::abs(flat.samples[static_cast<size_t>(i)] - ref[static_cast<size_t>(i)]) <= 1e-9);
  }
}

TEST_CASE("detrend keeps in-band amplitude within 5%") {
  const RppgSignal sine = tone(1.5, 30.0, 600);
  const RppgSignal flat = detrend(sine, 300.0);
  // Amplitude via projection onto the same sinusoid.
  double dot = 0.0;
  for (size_t i = 0; i < flat.samples.size(); ++i) {
    dot += flat.samples[i] *
           std::sin(2.0 * std::numbers::pi * 1.5 * static_cast<double>(i) / 30.0);
  }
  const double retained = 2.0 * dot / static_cast<double>(flat.samples.size());
  CHECK(retained == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("bandpass removes DC") {
  RppgSignal dc;
  dc.fs = 30.0;
  dc.samples.assign(128, 0.7);
  const RppgSignal out = bandpass(dc, 0.7, 4.0);
  for (double v : out.samples) CHECK(std::abs(v) <= 1e-9);
}

TEST_CASE("bandpass keeps an in-band on-bin tone") {
  const RppgSignal x = tone(1.2, 30.0, 600);  // bin 24 of 600
  const RppgSignal out = bandpass(x, 0.7, 4.0);
  for (size_t i = 0; i < x.samples.size(); ++i) {
    CHECK(std::abs(out.samples[i] - x.samples[i]) <= 1e-6);
  }
}

TEST_CASE("bandpass rejects an out-of-band tone") {
  const RppgSignal x = tone(6.0, 30.0, 600);
  const RppgSignal out = bandpass(x, 0.7, 4.0);
  CHECK(energy(out.samples) <= 1e-10 * energy(x.samples));
}

TEST_CASE("bandpass is idempotent") {
  Rng rng(14);
  RppgSignal x;
  x.fs = 30.0;
  x.samples.resize(256);
  for (double& v : x.samples) v = rng.uniform(-1.0, 1.0);
  const RppgSignal once = bandpass(x, 0.7, 4.0);
  const RppgSignal twice = bandpass(once, 0.7, 4.0);
  for (size_t i = 0; i < x.samples.size(); ++i) {
    CHECK(std::abs(once.samples[i] - twice.samples[i]) <= 1e-9);
  }
}

TEST_CASE("bandpass validates the band against Nyquist") {
  const RppgSignal x = tone(1.0, 30.0, 64);
  CHECK_THROWS_AS(bandpass(x, 0.7, 20.0), ConfigError);
  CHECK_THROWS_AS(bandpass(x, -0.1, 4.0), ConfigError);
}

TEST_CASE("power_spectrum of an on-bin tone peaks there and leaks only to neighbors") {
  const RppgSignal x = tone(1.2, 30.0, 600);
  const SpectralEstimate spec = power_spectrum(x);
  // 20-second segments at fs 30 give a 0.05 Hz grid.
  CHECK(spec.freqs[1] == doctest::Approx(0.05));
  size_t peak = 0;
  for (size_t k = 1; k < spec.power.size(); ++k) {
    if (spec.power[k] > spec.power[peak]) peak = k;
  }
  CHECK(spec.freqs[peak] == doctest::Approx(1.2));
  // A periodic Hann window spreads an on-bin tone over exactly three bins;
  // every other bin stays at least 100x below the peak.
  for (size_t k = 0; k < spec.power.size(); ++k) {
    if (k + 1 >= peak && k <= peak + 1) continue;
    CHECK(spec.power[k] * 100.0 <= spec.power[peak]);
  }
  // The immediate neighbors carry a quarter of the peak amplitude each.
  CHECK(spec.power[peak - 1] == doctest::Approx(spec.power[peak] / 4.0).epsilon(1e-6));
  CHECK(spec.power[peak + 1] == doctest::Approx(spec.power[peak] / 4.0).epsilon(1e-6));
}

TEST_CASE("power_spectrum of the zero signal is zero") {
  RppgSignal zero;
  zero.fs = 30.0;
  zero.samples.assign(64, 0.0);
  const SpectralEstimate spec = power_spectrum(zero);
  for (double p : spec.power) CHECK(p == 0.0);
}

TEST_CASE("power_spectrum satisfies Parseval within 5%") {
  Rng rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    RppgSignal x;
    x.fs = 30.0;
    x.samples.resize(2400);
    for (double& v : x.samples) v = rng.uniform(-1.0, 1.0);
    const SpectralEstimate spec = power_spectrum(x);
    double integral = 0.0;
    const double bin_width = spec.freqs[1] - spec.freqs[0];
    for (double p : spec.power) integral += p * bin_width;
    const double variance = oracle::variance_of(x.samples);
    CHECK(integral == doctest::Approx(variance).epsilon(0.05));
  }
}

TEST_CASE("estimate_hr nails on-bin tones") {
  const SpectralEstimate spec = power_spectrum(tone(1.0, 30.0, 600));
  const HrEstimate hr = estimate_hr(spec, 0.7, 4.0);
  CHECK(hr.bpm == doctest::Approx(60.0));
  CHECK(hr.peak_freq == doctest::Approx(1.0));
  CHECK(hr.confidence > 0.5);

  const HrEstimate hr72 = estimate_hr(power_spectrum(tone(1.2, 30.0, 600)), 0.7, 4.0);
  CHECK(std::abs(hr72.bpm - 72.0) <= 1.5);
}

TEST_CASE("estimate_hr under white noise matches a zero-padded DFT oracle") {
  Rng rng(16);
  RppgSignal x = tone(1.5, 30.0, 900);  // 30 s
  double signal_power = energy(x.samples) / static_cast<double>(x.samples.size());
  for (double& v : x.samples) v += std::sqrt(signal_power) * rng.gaussian();  // SNR 0 dB
  const HrEstimate hr = estimate_hr(power_spectrum(x), 0.7, 4.0);
  CHECK(std::abs(hr.bpm - 90.0) <= 3.0);
  const double oracle_freq = oracle::dft_peak_freq(x.samples, 30.0, 0.7, 4.0, 4);
  CHECK(std::abs(hr.bpm - 60.0 * oracle_freq) <= 3.0);
}

TEST_CASE("estimate_hr breaks ties toward the lowest frequency") {
  SpectralEstimate spec;
  spec.freqs = {0.5, 1.0, 1.5, 2.0};
  spec.power = {0.0, 2.0, 2.0, 1.0};
  const HrEstimate hr = estimate_hr(spec, 0.7, 4.0);
  CHECK(hr.peak_freq == 1.0);
}

TEST_CASE("estimate_hr rejects a band with no bins") {
  SpectralEstimate spec;
  spec.freqs = {0.0, 1.0, 2.0};
  spec.power = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(estimate_hr(spec, 2.5, 2.9), ConfigError);
}

TEST_CASE("hr pipeline recovers tones across the band within one bin") {
  for (const double f : {0.8, 1.0, 1.5, 2.5, 3.5}) {
    const HrEstimate hr = hr_from_trace(tone(f, 30.0, 600, 0.3, 0.5));
    CHECK(std::abs(hr.bpm - 60.0 * f) <= 1.5);
  }
}

TEST_CASE("scaling the input leaves the estimated bpm unchanged and scales power by c^2") {
  const RppgSignal x = tone(1.3, 30.0, 600, 0.2, 0.0);
  RppgSignal scaled = x;
  for (double& v : scaled.samples) v *= 3.0;
  const SpectralEstimate a = power_spectrum(x);
  const SpectralEstimate b = power_spectrum(scaled);
  for (size_t k = 0; k < a.power.size(); ++k) {
    CHECK(b.power[k] == doctest::Approx(9.0 * a.power[k]).epsilon(1e-9));
  }
  CHECK(estimate_hr(a, 0.7, 4.0).bpm == estimate_hr(b, 0.7, 4.0).bpm);
}

TEST_CASE("signal csv uses the documented header") {
  const auto dir = std::filesystem::temp_directory_path() / "rppg_signal_tests";
  std::filesystem::create_directories(dir);
  const RppgSignal x = tone(1.0, 30.0, 64);
  write_signal_csv(x, dir / "sig.csv");
  std::ifstream in(dir / "sig.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "t_s,value");
  SpectralEstimate spec = power_spectrum(x);
  write_spectrum_csv(spec, dir / "spec.csv");
  std::ifstream in2(dir / "spec.csv");
  std::getline(in2, header);
  CHECK(header == "freq_hz,power");
}
