#include "rppg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "rppg/errors.hpp"
#include "rppg/rng.hpp"

namespace rppg {

namespace {

constexpr double kBaseTone[3] = {0.6, 0.45, 0.4};
constexpr double kTextureAmp = 0.05;
constexpr double kSecondHarmonic = 0.3;
constexpr double kMotionHz = 0.3;

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

PulseClip generate_pulse_clip(const SynthConfig& config) {
  if (config.hr_bpm < 42.0 || config.hr_bpm > 240.0) {
    throw ConfigError("hr_bpm " + std::to_string(config.hr_bpm) + " outside [42, 240]");
  }
  if (!(config.fps > 0.0)) throw ConfigError("fps must be positive");
  if (config.hr_bpm / 60.0 >= config.fps / 2.0) {
    throw ConfigError("pulse frequency violates Nyquist at fps " + std::to_string(config.fps));
  }
  const int64_t frames = std::llround(config.duration_s * config.fps);
  if (frames < 64) throw ConfigError("duration*fps must give at least 64 frames");
  if (config.height < 1 || config.width < 1) throw ConfigError("frame extents must be >= 1");
  if (config.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (config.motion_amp_px < 0.0) throw ConfigError("motion amplitude must be >= 0");

  Rng rng(config.seed);
  const int64_t h = config.height;
  const int64_t w = config.width;

  // Static per-pixel texture, drawn before any per-frame noise.
  std::vector<double> texture(static_cast<size_t>(h * w * 3));
  for (double& v : texture) v = rng.uniform(-kTextureAmp, kTextureAmp);

  const double amp[3] = {config.amp_r, config.amp_g, config.amp_b};
  const double freq = config.hr_bpm / 60.0;

  PulseClip out;
  out.hr_bpm = config.hr_bpm;
  out.truth.fs = config.fps;
  out.truth.samples.resize(static_cast<size_t>(frames));

  std::vector<double> values(static_cast<size_t>(frames * h * w * 3));
  size_t idx = 0;
  for (int64_t t = 0; t < frames; ++t) {
    const double seconds = static_cast<double>(t) / config.fps;
    const double phase = 2.0 * std::numbers::pi * freq * seconds;
    const double pulse = std::sin(phase) + kSecondHarmonic * std::sin(2.0 * phase);
    out.truth.samples[static_cast<size_t>(t)] = pulse;
    const int64_t shift =
        config.motion_amp_px > 0.0
            ? std::llround(config.motion_amp_px *
                           std::sin(2.0 * std::numbers::pi * kMotionHz * seconds))
            : 0;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const int64_t sx = ((x + shift) % w + w) % w;
        const double* tex = texture.data() + (y * w + sx) * 3;
        for (int64_t c = 0; c < 3; ++c) {
          double v = kBaseTone[c] + amp[c] * pulse + tex[c];
          if (config.noise_sigma > 0.0) v += config.noise_sigma * rng.gaussian();
          values[idx++] = quantize_f32(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  out.clip = make_clip(Tensor::from_data({frames, h, w, 3}, std::move(values)), config.fps);
  return out;
}

std::filesystem::path generate_dataset(const DatasetSpec& spec,
                                       const std::filesystem::path& out_dir) {
  if (spec.count < 1) throw ConfigError("dataset count must be >= 1");
  if (!(spec.hr_lo_bpm <= spec.hr_hi_bpm)) throw ConfigError("hr range is empty");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir.string());

  Rng master(spec.base.seed);
  const std::filesystem::path manifest_path = out_dir / "manifest.tsv";
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw IoError("cannot open " + manifest_path.string() + " for writing");

  for (int64_t i = 0; i < spec.count; ++i) {
    SynthConfig item = spec.base;
    item.hr_bpm = master.uniform(spec.hr_lo_bpm, spec.hr_hi_bpm);
    item.seed = master.fork(static_cast<uint64_t>(i)).next_u64();
    const PulseClip pulse = generate_pulse_clip(item);
    const VideoClip low = degrade(pulse.clip, spec.degrade_factor, spec.degrade_noise_sigma,
                                  master.fork(static_cast<uint64_t>(i) | (1ull << 62)).next_u64());

    char low_name[48];
    char high_name[48];
    std::snprintf(low_name, sizeof(low_name), "clip%04lld_low.rpgc",
                  static_cast<long long>(i));
    std::snprintf(high_name, sizeof(high_name), "clip%04lld_high.rpgc",
                  static_cast<long long>(i));
    write_clip(low, out_dir / low_name);
    write_clip(pulse.clip, out_dir / high_name);

    char line[128];
    std::snprintf(line, sizeof(line), "%s\t%s\t%.9g\n", low_name, high_name, pulse.hr_bpm);
    manifest << line;
  }
  if (!manifest) throw IoError("short write to " + manifest_path.string());
  return manifest_path;
}

}  // namespace rppg
