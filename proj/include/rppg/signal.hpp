#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "rppg/video.hpp"

namespace rppg {

// Uniformly sampled pulse trace.
struct RppgSignal {
  std::vector<double> samples;
  double fs = 0.0;  // Hz
};

// One-sided power spectral density over a uniform ascending frequency grid.
struct SpectralEstimate {
  std::vector<double> freqs;  // Hz
  std::vector<double> power;
};

struct HrEstimate {
  double bpm = 0.0;
  double peak_freq = 0.0;  // Hz
  double confidence = 0.0;  // peak power / total in-band power
};

// Physiological search band, 42-240 bpm.
inline constexpr double kHrBandLowHz = 0.7;
inline constexpr double kHrBandHighHz = 4.0;

// Per-frame spatial average of each color channel; returns {R, G, B}.
std::array<RppgSignal, 3> spatial_mean_rgb(const VideoClip& clip);

// Smoothness-prior detrending: x - (I + lambda^2 D2'D2)^-1 x with D2 the
// second-difference operator. Solved with a banded Cholesky factorization.
RppgSignal detrend(const RppgSignal& signal, double lambda);

// Default smoothing weight, proportional to the sample rate.
double detrend_lambda(double fs);

// Zero-phase FFT-domain mask filter: bins with |freq| outside [lo, hi] are
// zeroed before the inverse transform. Length is preserved.
RppgSignal bandpass(const RppgSignal& signal, double lo_hz, double hi_hz);

// Welch estimate: mean-removed signal, 50%-overlapping Hann-windowed segments
// of welch_segment_length samples, averaged periodograms scaled to density
// (sum of power * bin width approximates the variance).
SpectralEstimate power_spectrum(const RppgSignal& signal);

// Segments cover 20 seconds, capped at the signal length. At fs 30 and 20 s
// of samples this gives a 0.05 Hz grid.
int64_t welch_segment_length(int64_t signal_len, double fs);

// Peak pick restricted to [lo, hi]; ties resolve to the lowest frequency.
HrEstimate estimate_hr(const SpectralEstimate& spectrum, double lo_hz, double hi_hz);

// Full post-processing chain: detrend, band-pass, Welch, peak pick.
HrEstimate hr_from_trace(const RppgSignal& signal, double lo_hz = kHrBandLowHz,
                         double hi_hz = kHrBandHighHz);

// CSV emitters with 9 significant digits: "t_s,value" and "freq_hz,power".
void write_signal_csv(const RppgSignal& signal, const std::filesystem::path& path);
void write_spectrum_csv(const SpectralEstimate& spectrum, const std::filesystem::path& path);

}  // namespace rppg
