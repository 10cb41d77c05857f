#pragma once

#include <cstdint>
#include <filesystem>

#include "rppg/signal.hpp"
#include "rppg/video.hpp"

namespace rppg {

// Pulsatile facial-video surrogate with a known heart rate. Each pixel is a
// fixed skin tone plus a per-channel pulse, a static texture, optional rigid
// texture motion and Gaussian noise.
struct SynthConfig {
  double hr_bpm = 72.0;           // [42, 240]
  double fps = 30.0;
  double duration_s = 20.0;       // duration*fps must be >= 64 frames
  double amp_r = 0.02;
  double amp_g = 0.05;            // largest by default
  double amp_b = 0.015;
  double noise_sigma = 0.0;
  double motion_amp_px = 0.0;     // 0.3 Hz sinusoidal texture translation
  int64_t height = 16;
  int64_t width = 16;
  uint64_t seed = 1;
};

struct PulseClip {
  VideoClip clip;
  RppgSignal truth;  // the pulse waveform p(t), sampled at fps
  double hr_bpm = 0.0;
};

// p(t) = sin(2 pi f t) + 0.3 sin(4 pi f t); pixel values are quantized to f32
// so clips survive file round-trips unchanged.
PulseClip generate_pulse_clip(const SynthConfig& config);

struct DatasetSpec {
  int64_t count = 20;
  double hr_lo_bpm = 50.0;
  double hr_hi_bpm = 150.0;
  SynthConfig base;               // per-item hr and seed are overwritten
  int64_t degrade_factor = 2;
  double degrade_noise_sigma = 0.0;
};

// Writes <count> (low, high) clip pairs plus a manifest with a trailing
// truth_bpm column; returns the manifest path.
std::filesystem::path generate_dataset(const DatasetSpec& spec,
                                       const std::filesystem::path& out_dir);

}  // namespace rppg
