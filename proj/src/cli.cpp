#include "rppg/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "rppg/checkpoint.hpp"
#include "rppg/errors.hpp"
#include "rppg/metrics.hpp"
#include "rppg/models.hpp"
#include "rppg/pruning.hpp"
#include "rppg/rng.hpp"
#include "rppg/signal.hpp"
#include "rppg/synth.hpp"
#include "rppg/training.hpp"
#include "rppg/video.hpp"

namespace rppg {

namespace {

struct ToolConfig {
  TrainConfig train;
  SynthConfig synth;
  EnhancerConfig enhancer = EnhancerConfig::defaults();
  RecoveryConfig recovery = RecoveryConfig::defaults();
  // Skips inserted by `train --prune-ratio` before saliency scoring.
  std::vector<SkipSpec> enhancer_skips = {{0, 2}, {1, 3}};
  std::vector<SkipSpec> recovery_skips = {{0, 2}};
  double band_lo = kHrBandLowHz;
  double band_hi = kHrBandHighHz;
  int64_t saliency_clips = 8;
};

std::vector<SkipSpec> parse_skips(const nlohmann::json& j) {
  std::vector<SkipSpec> skips;
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2) {
      throw ConfigError("config skips must be [source, dest] pairs");
    }
    skips.push_back({pair[0].get<int32_t>(), pair[1].get<int32_t>()});
  }
  return skips;
}

std::vector<ConvStage> parse_stages(const nlohmann::json& j) {
  std::vector<ConvStage> stages;
  for (const auto& s : j) {
    ConvStage stage;
    stage.channels = s.at("channels").get<int64_t>();
    if (s.contains("kernel")) {
      const auto& k = s["kernel"];
      if (!k.is_array() || k.size() != 3) {
        throw ConfigError("config stage kernel must be [kT,kH,kW]");
      }
      for (int a = 0; a < 3; ++a) stage.kernel[static_cast<size_t>(a)] = k[static_cast<size_t>(a)].get<int64_t>();
    }
    stages.push_back(stage);
  }
  return stages;
}

ToolConfig load_tool_config(const std::string& path) {
  ToolConfig config;
  if (path.empty()) return config;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("bad config JSON: ") + e.what());
  }
  try {
    if (j.contains("train")) {
      const auto& t = j["train"];
      config.train.learning_rate = t.value("learning_rate", config.train.learning_rate);
      config.train.steps = t.value("steps", config.train.steps);
      config.train.batch_size = t.value("batch_size", config.train.batch_size);
      config.train.crop_frames = t.value("crop_frames", config.train.crop_frames);
      config.train.seed = t.value("seed", config.train.seed);
      config.train.loss_weights.recon = t.value("w_recon", config.train.loss_weights.recon);
      config.train.loss_weights.loop = t.value("w_loop", config.train.loss_weights.loop);
      config.train.beta1 = t.value("beta1", config.train.beta1);
      config.train.beta2 = t.value("beta2", config.train.beta2);
      config.train.adam_epsilon = t.value("adam_epsilon", config.train.adam_epsilon);
    }
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      config.synth.fps = s.value("fps", config.synth.fps);
      config.synth.duration_s = s.value("duration_s", config.synth.duration_s);
      config.synth.height = s.value("height", config.synth.height);
      config.synth.width = s.value("width", config.synth.width);
      config.synth.amp_r = s.value("amp_r", config.synth.amp_r);
      config.synth.amp_g = s.value("amp_g", config.synth.amp_g);
      config.synth.amp_b = s.value("amp_b", config.synth.amp_b);
      config.synth.noise_sigma = s.value("noise_sigma", config.synth.noise_sigma);
      config.synth.motion_amp_px = s.value("motion_amp_px", config.synth.motion_amp_px);
      config.synth.seed = s.value("seed", config.synth.seed);
    }
    if (j.contains("enhancer_stages")) config.enhancer.stages = parse_stages(j["enhancer_stages"]);
    if (j.contains("recovery_stages")) config.recovery.stages = parse_stages(j["recovery_stages"]);
    if (j.contains("enhancer_skips")) config.enhancer_skips = parse_skips(j["enhancer_skips"]);
    if (j.contains("recovery_skips")) config.recovery_skips = parse_skips(j["recovery_skips"]);
    if (j.contains("band")) {
      config.band_lo = j["band"].at(0).get<double>();
      config.band_hi = j["band"].at(1).get<double>();
    }
    config.saliency_clips = j.value("saliency_clips", config.saliency_clips);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad config JSON value: ") + e.what());
  }
  return config;
}

void parse_band_flag(const std::string& text, ToolConfig& config) {
  if (text.empty()) return;
  const size_t comma = text.find(',');
  bool ok = comma != std::string::npos;
  if (ok) {
    try {
      config.band_lo = std::stod(text.substr(0, comma));
      config.band_hi = std::stod(text.substr(comma + 1));
    } catch (const std::exception&) {
      ok = false;
    }
  }
  if (!ok) throw ConfigError("--band expects \"lo,hi\" in Hz");
}

VideoClip load_clip_with_roi(const std::string& clip_path, const std::string& roi_path) {
  VideoClip clip = read_clip(clip_path);
  if (!roi_path.empty()) clip = crop_roi(clip, read_roi_file(roi_path));
  return clip;
}

int cmd_synth(const ToolConfig& config, const std::string& out_dir, int64_t count,
              double hr_lo, double hr_hi, int64_t degrade_factor, double degrade_noise) {
  DatasetSpec spec;
  spec.count = count;
  spec.hr_lo_bpm = hr_lo;
  spec.hr_hi_bpm = hr_hi;
  spec.base = config.synth;
  spec.degrade_factor = degrade_factor;
  spec.degrade_noise_sigma = degrade_noise;
  const std::filesystem::path manifest = generate_dataset(spec, out_dir);
  std::cout << "wrote " << count << " clip pairs, manifest " << manifest.string() << "\n";
  return 0;
}

int cmd_train(const ToolConfig& config, const std::string& manifest_path,
              const std::string& out_dir, std::optional<double> prune_ratio) {
  config.train.validate();
  Rng seeder(config.train.seed);
  JointModel model;
  model.enhancer = init_params(config.enhancer, seeder.fork(1).next_u64());
  model.recovery = init_params(config.recovery, seeder.fork(2).next_u64());

  std::optional<SparsityMask> mask;
  if (prune_ratio) {
    model.enhancer = add_skip_connections(model.enhancer, config.enhancer_skips);
    model.recovery = add_skip_connections(model.recovery, config.recovery_skips);

    const std::vector<LoadedPair> pairs = load_pairs(read_manifest(manifest_path));
    Rng rng = seeder.fork(3);
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    rng.shuffle(order);
    const size_t batch_clips =
        std::min(static_cast<size_t>(config.saliency_clips), pairs.size());
    std::vector<size_t> indices(order.begin(), order.begin() + static_cast<long>(batch_clips));
    std::vector<int64_t> offsets;
    for (size_t idx : indices) {
      const int64_t t_ext = pairs[idx].low.shape()[1];
      const int64_t crop = std::min(config.train.crop_frames, t_ext);
      offsets.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(t_ext - crop + 1))));
    }
    const Batch batch = make_batch(pairs, indices, offsets, config.train.crop_frames);
    const SaliencyMap saliency =
        saliency_on_batch(model, batch.low, batch.high, config.train.loss_weights);
    mask = prune(saliency, *prune_ratio);
    apply_mask(model, *mask);
    std::cout << "pruned to " << mask->kept_count() << " of " << mask->total_count()
              << " weights (ratio " << *prune_ratio << ")\n";
  }

  const FitResult result =
      fit(model, config.train, manifest_path, mask ? &*mask : nullptr, out_dir);
  std::cout << "checkpoint " << result.checkpoint_path.string() << "\n";
  std::cout << "loss curve " << result.loss_csv_path.string() << "\n";
  char line[96];
  std::snprintf(line, sizeof(line), "final loss %.6g (recon %.6g, loop %.6g)\n",
                result.curve.back().total, result.curve.back().recon_rmse,
                result.curve.back().loop);
  std::cout << line;
  return 0;
}

int cmd_infer(const ToolConfig& config, const std::string& checkpoint_path,
              const std::string& clip_path, const std::string& roi_path,
              const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const JointModel model = joint_from_entries(ckpt.entries);
  const VideoClip clip = load_clip_with_roi(clip_path, roi_path);
  const InferResult result = infer_clip(model, clip);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path enhanced_path = std::filesystem::path(out_dir) / "enhanced.rpgc";
  const std::filesystem::path csv_path = std::filesystem::path(out_dir) / "rppg.csv";
  write_clip(result.enhanced, enhanced_path);
  write_signal_csv(result.rppg, csv_path);

  const HrEstimate hr = hr_from_trace(result.rppg, config.band_lo, config.band_hi);
  char line[96];
  std::snprintf(line, sizeof(line), "hr_bpm %.2f peak_freq_hz %.4f confidence %.3f\n", hr.bpm,
                hr.peak_freq, hr.confidence);
  std::cout << line;
  std::cout << "enhanced clip " << enhanced_path.string() << "\n";
  std::cout << "rppg trace " << csv_path.string() << "\n";
  return 0;
}

int cmd_baseline(const ToolConfig& config, const std::string& clip_path,
                 const std::string& roi_path) {
  const VideoClip clip = load_clip_with_roi(clip_path, roi_path);
  const auto traces = spatial_mean_rgb(clip);
  const HrEstimate hr = hr_from_trace(traces[1], config.band_lo, config.band_hi);
  char line[96];
  std::snprintf(line, sizeof(line), "hr_bpm %.2f peak_freq_hz %.4f confidence %.3f\n", hr.bpm,
                hr.peak_freq, hr.confidence);
  std::cout << line;
  return 0;
}

int cmd_eval(const ToolConfig& config, const std::string& manifest_path,
             const std::string& checkpoint_path, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const JointModel model = joint_from_entries(ckpt.entries);
  const std::vector<ManifestEntry> entries = read_manifest(manifest_path);

  std::vector<double> pred;
  std::vector<double> truth;
  for (const ManifestEntry& entry : entries) {
    if (!entry.truth_bpm) {
      throw ContractError("manifest entry " + entry.low.string() +
                          " lacks a truth_bpm column required by eval");
    }
    VideoClip clip = read_clip(entry.low);
    if (entry.roi) clip = crop_roi(clip, read_roi_file(*entry.roi));
    const InferResult result = infer_clip(model, clip);
    const HrEstimate hr = hr_from_trace(result.rppg, config.band_lo, config.band_hi);
    pred.push_back(hr.bpm);
    truth.push_back(*entry.truth_bpm);
    char line[160];
    std::snprintf(line, sizeof(line), "clip %s pred_bpm %.9g truth_bpm %.9g\n",
                  entry.low.filename().string().c_str(), hr.bpm, *entry.truth_bpm);
    std::cout << line;
  }

  const MetricsReport report = compute_metrics(pred, truth);
  const std::string table = metrics_table(report);
  const std::string json_text = metrics_to_json(report);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path json_path = std::filesystem::path(out_dir) / "report.json";
  const std::filesystem::path table_path = std::filesystem::path(out_dir) / "report.txt";
  std::ofstream(json_path, std::ios::trunc) << json_text;
  std::ofstream(table_path, std::ios::trunc) << table;

  std::cout << table;
  std::cout << "report " << json_path.string() << "\n";
  return 0;
}

int cmd_spectra(const ToolConfig& config, const std::string& clip_path,
                const std::string& roi_path, const std::string& out_dir) {
  const VideoClip clip = load_clip_with_roi(clip_path, roi_path);
  const auto traces = spatial_mean_rgb(clip);
  std::filesystem::create_directories(out_dir);
  const char* names[3] = {"spectrum_r.csv", "spectrum_g.csv", "spectrum_b.csv"};
  for (int c = 0; c < 3; ++c) {
    const RppgSignal detrended =
        detrend(traces[static_cast<size_t>(c)], detrend_lambda(clip.fps));
    const SpectralEstimate spectrum = power_spectrum(detrended);
    const std::filesystem::path path = std::filesystem::path(out_dir) / names[c];
    write_spectrum_csv(spectrum, path);
    std::cout << path.string() << "\n";
  }
  (void)config;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"desk-scale remote photoplethysmography pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string band_text;
  std::optional<uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_flag, "override the configured seed");
  app.add_option("--band", band_text, "HR search band \"lo,hi\" in Hz");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic pulse dataset");
  std::string out_dir;
  int64_t count = 20;
  double hr_lo = 50.0;
  double hr_hi = 150.0;
  int64_t degrade_factor = 2;
  double degrade_noise = 0.0;
  synth_cmd->add_option("--out", out_dir, "output directory")->required();
  synth_cmd->add_option("--count", count, "number of clip pairs");
  synth_cmd->add_option("--hr-lo", hr_lo, "low end of the HR range (bpm)");
  synth_cmd->add_option("--hr-hi", hr_hi, "high end of the HR range (bpm)");
  synth_cmd->add_option("--degrade-factor", degrade_factor, "spatial degradation factor");
  synth_cmd->add_option("--degrade-noise", degrade_noise, "noise sigma of the low-res clips");

  auto* train_cmd = app.add_subcommand("train", "jointly train enhancer and recovery models");
  std::string manifest_path;
  std::optional<double> prune_ratio;
  std::optional<int64_t> steps_flag;
  train_cmd->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--prune-ratio", prune_ratio,
                        "single-shot compression ratio applied before training");
  train_cmd->add_option("--steps", steps_flag, "override the configured step count");

  auto* infer_cmd = app.add_subcommand("infer", "enhance a clip and recover its rPPG trace");
  std::string checkpoint_path;
  std::string clip_path;
  std::string roi_path;
  infer_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  infer_cmd->add_option("--clip", clip_path, "input clip")->required();
  infer_cmd->add_option("--roi", roi_path, "ROI sidecar file");
  infer_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* baseline_cmd = app.add_subcommand("baseline", "green-channel HR without networks");
  baseline_cmd->add_option("--clip", clip_path, "input clip")->required();
  baseline_cmd->add_option("--roi", roi_path, "ROI sidecar file");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint against a manifest");
  eval_cmd->add_option("--manifest", manifest_path, "manifest with truth_bpm column")
      ->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* spectra_cmd = app.add_subcommand("spectra", "per-channel power spectra of a clip");
  spectra_cmd->add_option("--clip", clip_path, "input clip")->required();
  spectra_cmd->add_option("--roi", roi_path, "ROI sidecar file");
  spectra_cmd->add_option("--out", out_dir, "output directory")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("rppg");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ToolConfig config = load_tool_config(config_path);
    parse_band_flag(band_text, config);
    if (seed_flag) {
      config.train.seed = *seed_flag;
      config.synth.seed = *seed_flag;
    }
    if (steps_flag) config.train.steps = *steps_flag;

    if (synth_cmd->parsed()) {
      return cmd_synth(config, out_dir, count, hr_lo, hr_hi, degrade_factor, degrade_noise);
    }
    if (train_cmd->parsed()) {
      return cmd_train(config, manifest_path, out_dir, prune_ratio);
    }
    if (infer_cmd->parsed()) {
      return cmd_infer(config, checkpoint_path, clip_path, roi_path, out_dir);
    }
    if (baseline_cmd->parsed()) {
      return cmd_baseline(config, clip_path, roi_path);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(config, manifest_path, checkpoint_path, out_dir);
    }
    if (spectra_cmd->parsed()) {
      return cmd_spectra(config, clip_path, roi_path, out_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace rppg
