#include "rppg/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rppg/errors.hpp"
#include "rppg/rng.hpp"

namespace rppg {

namespace {

std::string stage_name(int64_t index, const char* part) {
  return "stage" + std::to_string(index) + "." + part;
}

std::string skip_name(const SkipSpec& skip) {
  return "skip" + std::to_string(skip.source) + "to" + std::to_string(skip.dest) + ".weight";
}

void check_stages(const std::vector<ConvStage>& stages, const char* kind) {
  if (stages.empty()) throw ConfigError(std::string(kind) + " needs at least one stage");
  for (const ConvStage& s : stages) {
    if (s.channels < 1) throw ConfigError(std::string(kind) + " stage has channels < 1");
    for (int64_t k : s.kernel) {
      if (k < 1 || k % 2 == 0) {
        throw ConfigError(std::string(kind) +
                          " kernel extents must be odd so extents are preserved");
      }
    }
  }
}

void check_skips(const std::vector<SkipSpec>& skips, int64_t stage_count, const char* kind) {
  std::set<std::pair<int32_t, int32_t>> seen;
  for (const SkipSpec& s : skips) {
    if (s.source < 0 || s.dest <= s.source || s.dest >= stage_count) {
      throw ConfigError(std::string(kind) + " skip " + std::to_string(s.source) + "->" +
                        std::to_string(s.dest) +
                        " must satisfy 0 <= source < dest < stage count");
    }
    if (!seen.insert({s.source, s.dest}).second) {
      throw ConfigError(std::string(kind) + " has duplicate skip " +
                        std::to_string(s.source) + "->" + std::to_string(s.dest));
    }
  }
}

// Channels of the activation entering stage `index` (0 = model input).
int64_t channels_into(const std::vector<ConvStage>& stages, int64_t index) {
  return index == 0 ? 3 : stages[static_cast<size_t>(index - 1)].channels;
}

Tensor init_conv_weight(int64_t out_ch, int64_t in_ch, const std::array<int64_t, 3>& k,
                        Rng& rng) {
  const int64_t fan_in = in_ch * k[0] * k[1] * k[2];
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  const int64_t n = out_ch * fan_in;
  std::vector<double> values(static_cast<size_t>(n));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_data({out_ch, in_ch, k[0], k[1], k[2]}, std::move(values));
}

NamedTensors init_stage_entries(const std::vector<ConvStage>& stages, Rng& rng) {
  NamedTensors entries;
  for (size_t i = 0; i < stages.size(); ++i) {
    const int64_t in_ch = channels_into(stages, static_cast<int64_t>(i));
    entries.emplace_back(stage_name(static_cast<int64_t>(i), "weight"),
                         init_conv_weight(stages[i].channels, in_ch, stages[i].kernel, rng));
    entries.emplace_back(stage_name(static_cast<int64_t>(i), "bias"),
                         Tensor::zeros({stages[i].channels}));
  }
  return entries;
}

}  // namespace

EnhancerConfig EnhancerConfig::defaults() {
  EnhancerConfig c;
  c.stages = {{8, {3, 3, 3}}, {16, {3, 3, 3}}, {16, {3, 3, 3}}, {3, {3, 3, 3}}};
  return c;
}

RecoveryConfig RecoveryConfig::defaults() {
  RecoveryConfig c;
  c.stages = {{8, {3, 1, 1}}, {16, {3, 1, 1}}, {16, {3, 1, 1}}};
  return c;
}

void validate_config(const EnhancerConfig& config) {
  check_stages(config.stages, "enhancer");
  if (config.stages.back().channels != 3) {
    throw ConfigError("enhancer must end with 3 output channels, got " +
                      std::to_string(config.stages.back().channels));
  }
  check_skips(config.skips, static_cast<int64_t>(config.stages.size()), "enhancer");
}

void validate_config(const RecoveryConfig& config) {
  check_stages(config.stages, "recovery");
  check_skips(config.skips, static_cast<int64_t>(config.stages.size()), "recovery");
}

ModelParams::ModelParams(ModelConfig config, NamedTensors entries)
    : config_(std::move(config)), entries_(std::move(entries)) {
  std::visit([](const auto& c) { validate_config(c); }, config_);
  std::set<std::string> names;
  for (const auto& [name, tensor] : entries_) {
    if (!names.insert(name).second) throw ContractError("duplicate layer name " + name);
    if (!tensor.defined()) throw ContractError("undefined tensor for layer " + name);
  }
}

const Tensor& ModelParams::tensor(const std::string& name) const {
  const Tensor* t = find_tensor(entries_, name);
  if (!t) throw ContractError("no layer named " + name);
  return *t;
}

void ModelParams::set_tensor(const std::string& name, Tensor value) {
  for (auto& [entry_name, tensor] : entries_) {
    if (entry_name != name) continue;
    if (!tensor.same_shape(value)) {
      throw ContractError("shape mismatch updating " + name + ": " +
                          shape_str(tensor.shape()) + " vs " + shape_str(value.shape()));
    }
    tensor = std::move(value);
    return;
  }
  throw ContractError("no layer named " + name);
}

ModelParams init_params(const EnhancerConfig& config, uint64_t seed) {
  validate_config(config);
  Rng rng(seed);
  NamedTensors entries = init_stage_entries(config.stages, rng);
  for (const SkipSpec& s : config.skips) {
    entries.emplace_back(
        skip_name(s), Tensor::zeros({channels_into(config.stages, s.dest),
                                     channels_into(config.stages, s.source), 1, 1, 1}));
  }
  return ModelParams(config, std::move(entries));
}

ModelParams init_params(const RecoveryConfig& config, uint64_t seed) {
  validate_config(config);
  Rng rng(seed);
  NamedTensors entries = init_stage_entries(config.stages, rng);
  entries.emplace_back("proj.weight",
                       init_conv_weight(1, config.stages.back().channels, {1, 1, 1}, rng));
  entries.emplace_back("proj.bias", Tensor::zeros({1}));
  for (const SkipSpec& s : config.skips) {
    entries.emplace_back(
        skip_name(s), Tensor::zeros({channels_into(config.stages, s.dest),
                                     channels_into(config.stages, s.source), 1, 1, 1}));
  }
  return ModelParams(config, std::move(entries));
}

std::map<std::string, NodeId> add_param_leaves(Graph& g, const ModelParams& params,
                                               const std::string& prefix) {
  std::map<std::string, NodeId> ids;
  for (const auto& [name, tensor] : params.entries()) {
    ids[name] = g.leaf(tensor.with_requires_grad(true), prefix + name);
  }
  return ids;
}

namespace {

NodeId conv_chain(Graph& g, const std::vector<ConvStage>& stages,
                  const std::vector<SkipSpec>& skips,
                  const std::map<std::string, NodeId>& leaves, NodeId input,
                  bool relu_last) {
  std::vector<NodeId> acts = {input};
  for (size_t i = 0; i < stages.size(); ++i) {
    NodeId x = acts[i];
    for (const SkipSpec& s : skips) {
      if (s.dest != static_cast<int32_t>(i)) continue;
      const NodeId proj = op_conv3d(g, acts[static_cast<size_t>(s.source)],
                                    leaves.at(skip_name(s)), Conv3dSpec{});
      x = op_add(g, x, proj);
    }
    Conv3dSpec spec;
    for (int a = 0; a < 3; ++a) spec.pad[static_cast<size_t>(a)] = stages[i].kernel[static_cast<size_t>(a)] / 2;
    NodeId pre = op_channel_bias(
        g, op_conv3d(g, x, leaves.at(stage_name(static_cast<int64_t>(i), "weight")), spec),
        leaves.at(stage_name(static_cast<int64_t>(i), "bias")));
    const bool is_last = i + 1 == stages.size();
    acts.push_back(!is_last || relu_last ? op_relu(g, pre) : pre);
  }
  return acts.back();
}

}  // namespace

NodeId forward_graph(Graph& g, const ModelParams& params,
                     const std::map<std::string, NodeId>& leaves, NodeId input) {
  const Shape& in_shape = g.value(input).shape();
  if (in_shape.size() != 5 || in_shape[1] != 3) {
    throw ContractError("model input must be [N,3,T,H,W], got " + shape_str(in_shape));
  }
  if (params.is_enhancer()) {
    const auto& config = std::get<EnhancerConfig>(params.config());
    const NodeId last =
        conv_chain(g, config.stages, config.skips, leaves, input, /*relu_last=*/false);
    return op_logistic(g, last);
  }
  const auto& config = std::get<RecoveryConfig>(params.config());
  const NodeId last =
      conv_chain(g, config.stages, config.skips, leaves, input, /*relu_last=*/true);
  const NodeId pooled = op_spatial_mean(g, last);
  return op_channel_bias(g, op_conv3d(g, pooled, leaves.at("proj.weight"), Conv3dSpec{}),
                         leaves.at("proj.bias"));
}

namespace {

std::map<std::string, NodeId> add_const_leaves(Graph& g, const ModelParams& params) {
  std::map<std::string, NodeId> ids;
  for (const auto& [name, tensor] : params.entries()) ids[name] = g.leaf(tensor);
  return ids;
}

}  // namespace

VideoClip enhancer_forward(const ModelParams& params, const VideoClip& clip) {
  if (!params.is_enhancer()) throw ContractError("enhancer_forward needs an enhancer model");
  Graph g;
  const NodeId input = g.leaf(clip_to_input(clip));
  const NodeId out = forward_graph(g, params, add_const_leaves(g, params), input);
  return input_to_clip(g.value(out), clip.fps);
}

RppgSignal recovery_forward(const ModelParams& params, const VideoClip& clip) {
  if (params.is_enhancer()) throw ContractError("recovery_forward needs a recovery model");
  Graph g;
  const NodeId input = g.leaf(clip_to_input(clip));
  const NodeId out = forward_graph(g, params, add_const_leaves(g, params), input);
  const Tensor& value = g.value(out);
  RppgSignal signal;
  signal.fs = clip.fps;
  signal.samples.assign(value.data().begin(), value.data().end());
  return signal;
}

NamedTensors joint_entries(const JointModel& model) {
  NamedTensors out;
  for (const auto& [name, tensor] : model.enhancer.entries()) {
    out.emplace_back(kEnhancerPrefix + name, tensor);
  }
  for (const auto& [name, tensor] : model.recovery.entries()) {
    out.emplace_back(kRecoveryPrefix + name, tensor);
  }
  return out;
}

namespace {

struct ParsedEntries {
  NamedTensors entries;
  std::map<int64_t, ConvStage> stages;
  std::vector<SkipSpec> skips;
  bool has_proj = false;
};

// Splits "stageN.weight" / "skipAtoB.weight" / "proj.weight" names and
// reconstructs the stage list from weight tensor shapes.
ParsedEntries parse_model_entries(const NamedTensors& entries, const std::string& prefix) {
  ParsedEntries parsed;
  for (const auto& [name, tensor] : entries) {
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string local = name.substr(prefix.size());
    parsed.entries.emplace_back(local, tensor);
    if (local.rfind("stage", 0) == 0 && local.ends_with(".weight")) {
      const int64_t index = std::stoll(local.substr(5));
      const Shape& s = tensor.shape();
      if (s.size() != 5) throw FormatError("checkpoint entry " + name + " is not a kernel");
      parsed.stages[index] = ConvStage{s[0], {s[2], s[3], s[4]}};
    } else if (local.rfind("skip", 0) == 0 && local.ends_with(".weight")) {
      const size_t to_pos = local.find("to");
      if (to_pos == std::string::npos) throw FormatError("bad skip entry name " + name);
      SkipSpec skip;
      skip.source = static_cast<int32_t>(std::stol(local.substr(4, to_pos - 4)));
      skip.dest = static_cast<int32_t>(std::stol(local.substr(to_pos + 2)));
      parsed.skips.push_back(skip);
    } else if (local == "proj.weight") {
      parsed.has_proj = true;
    }
  }
  return parsed;
}

std::vector<ConvStage> ordered_stages(const std::map<int64_t, ConvStage>& stages,
                                      const std::string& which) {
  std::vector<ConvStage> out;
  for (const auto& [index, stage] : stages) {
    if (index != static_cast<int64_t>(out.size())) {
      throw FormatError("checkpoint " + which + " stages are not contiguous");
    }
    out.push_back(stage);
  }
  return out;
}

}  // namespace

JointModel joint_from_entries(const NamedTensors& entries) {
  ParsedEntries enh = parse_model_entries(entries, kEnhancerPrefix);
  ParsedEntries rec = parse_model_entries(entries, kRecoveryPrefix);
  if (enh.entries.empty() || rec.entries.empty()) {
    throw FormatError("checkpoint does not contain both models");
  }
  if (!rec.has_proj) throw FormatError("checkpoint recovery model lacks a projection");

  EnhancerConfig enh_config;
  enh_config.stages = ordered_stages(enh.stages, "enhancer");
  enh_config.skips = enh.skips;
  RecoveryConfig rec_config;
  rec_config.stages = ordered_stages(rec.stages, "recovery");
  rec_config.skips = rec.skips;

  JointModel model;
  model.enhancer = ModelParams(enh_config, std::move(enh.entries));
  model.recovery = ModelParams(rec_config, std::move(rec.entries));
  return model;
}

void update_joint_entries(JointModel& model, const std::string& name, Tensor value) {
  const std::string enh = kEnhancerPrefix;
  const std::string rec = kRecoveryPrefix;
  if (name.rfind(enh, 0) == 0) {
    model.enhancer.set_tensor(name.substr(enh.size()), std::move(value));
  } else if (name.rfind(rec, 0) == 0) {
    model.recovery.set_tensor(name.substr(rec.size()), std::move(value));
  } else {
    throw ContractError("parameter name " + name + " lacks a model prefix");
  }
}

InferResult infer_clip(const JointModel& model, const VideoClip& clip) {
  Graph g;
  const NodeId input = g.leaf(clip_to_input(clip));
  const NodeId enhanced =
      forward_graph(g, model.enhancer, add_const_leaves(g, model.enhancer), input);
  const NodeId trace =
      forward_graph(g, model.recovery, add_const_leaves(g, model.recovery), enhanced);

  InferResult result;
  result.enhanced = input_to_clip(g.value(enhanced), clip.fps);
  result.rppg.fs = clip.fps;
  const Tensor& value = g.value(trace);
  result.rppg.samples.assign(value.data().begin(), value.data().end());
  return result;
}

}  // namespace rppg
