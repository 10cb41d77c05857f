#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rppg/models.hpp"
#include "rppg/pruning.hpp"
#include "rppg/signal.hpp"
#include "rppg/video.hpp"

namespace rppg {

struct LossWeights {
  double recon = 1.0;
  double loop = 1.0;
};

struct LossBreakdown {
  double total = 0.0;
  double recon_rmse = 0.0;
  double loop = 0.0;
  LossWeights weights;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int64_t steps = 500;
  int64_t batch_size = 2;
  int64_t crop_frames = 64;  // temporal window per sample; shorter clips pass whole
  uint64_t seed = 1;
  LossWeights loss_weights;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

// recon_rmse = sqrt(mean (enhanced - target)^2) over every pixel;
// loop = sqrt(mean (pred - ref)^2); total = w_recon*recon + w_loop*loop.
LossBreakdown joint_loss(const VideoClip& enhanced, const VideoClip& target,
                         const RppgSignal& pred, const RppgSignal& ref,
                         const LossWeights& weights);

struct JointLossNodes {
  NodeId total;
  NodeId recon_rmse;
  NodeId loop;
};

// Differentiable joint loss over one batch. `low` and `high` are stacked
// inputs [B,3,T,H,W]; both recovery branches (on the enhanced batch and on
// the ground-truth batch) run with the same shared parameter leaves.
JointLossNodes joint_loss_graph(Graph& g, const std::map<std::string, NodeId>& enh_leaves,
                                const std::map<std::string, NodeId>& rec_leaves,
                                const JointModel& model, NodeId low, NodeId high,
                                const LossWeights& weights);

struct AdamState {
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  int64_t step = 0;
};

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected adaptive-moment update. `first` and `second` are the
// running moments, updated in place; `step_number` starts at 1.
Tensor adam_update(const Tensor& param, const Tensor& grad, Tensor& first, Tensor& second,
                   int64_t step_number, const AdamHyper& hyper);

// One forward/backward pass over the batch and an adaptive-moment update of
// both models, followed by mask multiplication when a mask is given. The
// returned loss is the pre-update value.
LossBreakdown train_step(JointModel& model, const Tensor& low, const Tensor& high,
                         const SparsityMask* mask, AdamState& state,
                         const TrainConfig& config);

// Connection sensitivity of every joint parameter on one batch.
SaliencyMap saliency_on_batch(const JointModel& model, const Tensor& low, const Tensor& high,
                              const LossWeights& weights);

struct ManifestEntry {
  std::filesystem::path low;
  std::filesystem::path high;
  std::optional<std::filesystem::path> roi;
  std::optional<double> truth_bpm;
};

// Tab-separated lines: low_path, high_path, then optionally an ROI sidecar
// path and/or a numeric truth_bpm column. Relative paths resolve against the
// manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct FitResult {
  std::filesystem::path checkpoint_path;
  std::filesystem::path loss_csv_path;
  std::vector<LossBreakdown> curve;
};

// Runs config.steps training steps over seeded-shuffled batches of temporal
// crops, then writes the checkpoint (with the mask when given) and the
// per-step loss curve CSV "step,total,recon_rmse,loop".
FitResult fit(JointModel& model, const TrainConfig& config,
              const std::filesystem::path& manifest_path, const SparsityMask* mask,
              const std::filesystem::path& out_dir);

// Loads a manifest pair list into stacked training tensors. Exposed for the
// saliency batch and tests.
struct LoadedPair {
  Tensor low;   // [3,T,H,W]
  Tensor high;  // [3,T,H,W]
  double fps = 0.0;
  std::optional<double> truth_bpm;
};
std::vector<LoadedPair> load_pairs(const std::vector<ManifestEntry>& entries);

// Stacks temporal crops of the selected pairs into [B,3,L,H,W] tensors.
struct Batch {
  Tensor low;
  Tensor high;
};
Batch make_batch(const std::vector<LoadedPair>& pairs, const std::vector<size_t>& indices,
                 const std::vector<int64_t>& offsets, int64_t crop_frames);

}  // namespace rppg
