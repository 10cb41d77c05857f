#pragma once

#include <functional>
#include <map>
#include <string>

#include "rppg/graph.hpp"
#include "rppg/models.hpp"
#include "rppg/tensor.hpp"

namespace rppg {

// Binary keep/drop decision per weight, one 0/1 tensor per layer.
struct SparsityMask {
  NamedTensors entries;
  double compression_ratio = 1.0;

  int64_t kept_count() const;
  int64_t total_count() const;
  const Tensor* find(const std::string& name) const { return find_tensor(entries, name); }
};

// Non-negative per-weight scores; after normalization the global sum is 1.
struct SaliencyMap {
  NamedTensors entries;
  double total() const;
};

// Returns a model augmented with the given skip connections. Projections are
// zero-initialized, so the augmented forward equals the original until they
// are trained.
ModelParams add_skip_connections(const ModelParams& params,
                                 const std::vector<SkipSpec>& skips);

// Connection sensitivity |g . w| for every parameter coordinate, evaluated on
// one loss graph built by `loss_builder` over leaves named after `params`,
// then normalized to unit total. Parameters the loss never reaches score 0.
SaliencyMap connection_sensitivity(
    const NamedTensors& params,
    const std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)>& loss_builder);

// Keeps the round(N/ratio) highest-saliency weights across all layers. Ties
// break by layer name (lexicographic), then flat index, ascending.
SparsityMask prune(const SaliencyMap& saliency, double ratio);

// Zeroes every masked weight. Training keeps them at zero by multiplying
// each update by the mask.
void apply_mask(ModelParams& params, const SparsityMask& mask, const std::string& prefix);
void apply_mask(JointModel& model, const SparsityMask& mask);

}  // namespace rppg
