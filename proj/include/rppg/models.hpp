#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "rppg/graph.hpp"
#include "rppg/signal.hpp"
#include "rppg/tensor.hpp"
#include "rppg/video.hpp"

namespace rppg {

// One convolution stage: stride 1, symmetric padding, odd kernel extents so
// T,H,W are preserved.
struct ConvStage {
  int64_t channels = 0;
  std::array<int64_t, 3> kernel{3, 3, 3};
};

// Extra connection: the activation entering stage `source` is passed through
// a 1x1x1 projection and added to the input of stage `dest`.
struct SkipSpec {
  int32_t source = 0;
  int32_t dest = 0;
};

// Shape-preserving video-to-video model; the last stage maps back to 3
// channels and a logistic squash keeps outputs in [0,1].
struct EnhancerConfig {
  std::vector<ConvStage> stages;
  std::vector<SkipSpec> skips;
  static EnhancerConfig defaults();
};

// Video-to-trace model: temporal convolution stages, a global spatial mean
// pool, then a 1x1x1 projection to a single channel. With spatially pointwise
// kernels the output is invariant to per-frame pixel permutations.
struct RecoveryConfig {
  std::vector<ConvStage> stages;
  std::vector<SkipSpec> skips;
  static RecoveryConfig defaults();
};

using ModelConfig = std::variant<EnhancerConfig, RecoveryConfig>;

void validate_config(const EnhancerConfig& config);
void validate_config(const RecoveryConfig& config);

// Named parameter tensors of one model, in architecture order.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(ModelConfig config, NamedTensors entries);

  const ModelConfig& config() const { return config_; }
  const NamedTensors& entries() const { return entries_; }
  NamedTensors& entries() { return entries_; }
  bool is_enhancer() const { return std::holds_alternative<EnhancerConfig>(config_); }

  const Tensor& tensor(const std::string& name) const;
  void set_tensor(const std::string& name, Tensor value);
  int64_t total_params() const { return total_elements(entries_); }

 private:
  ModelConfig config_;
  NamedTensors entries_;
};

// Fan-in scaled uniform initialization, variance 1/fan_in; biases start at 0.
ModelParams init_params(const EnhancerConfig& config, uint64_t seed);
ModelParams init_params(const RecoveryConfig& config, uint64_t seed);

// Registers one requires_grad leaf per entry under `prefix + name`. The
// returned map is keyed by the unprefixed entry name.
std::map<std::string, NodeId> add_param_leaves(Graph& g, const ModelParams& params,
                                               const std::string& prefix);

// Builds the forward graph; `input` is [N,3,T,H,W]. Enhancer output matches
// the input shape; recovery output is [N,1,T,1,1].
NodeId forward_graph(Graph& g, const ModelParams& params,
                     const std::map<std::string, NodeId>& leaves, NodeId input);

VideoClip enhancer_forward(const ModelParams& params, const VideoClip& clip);
RppgSignal recovery_forward(const ModelParams& params, const VideoClip& clip);

struct JointModel {
  ModelParams enhancer;
  ModelParams recovery;
};

inline constexpr const char* kEnhancerPrefix = "enhancer.";
inline constexpr const char* kRecoveryPrefix = "recovery.";

// Union of both models' entries under the prefixes above.
NamedTensors joint_entries(const JointModel& model);
// Rebuilds both models from prefixed entries; stage and skip topology is
// recovered from entry names and tensor shapes.
JointModel joint_from_entries(const NamedTensors& entries);
// Writes updated tensors back into the owning model.
void update_joint_entries(JointModel& model, const std::string& name, Tensor value);

struct InferResult {
  VideoClip enhanced;
  RppgSignal rppg;
};

// Low-resolution clip through the enhancer, then the recovery model, in one
// graph evaluation.
InferResult infer_clip(const JointModel& model, const VideoClip& clip);

}  // namespace rppg
