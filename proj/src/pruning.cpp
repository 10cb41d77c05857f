#include "rppg/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rppg/errors.hpp"

namespace rppg {

int64_t SparsityMask::kept_count() const {
  int64_t kept = 0;
  for (const auto& [name, tensor] : entries) {
    for (int64_t i = 0; i < tensor.numel(); ++i) kept += tensor[i] != 0.0 ? 1 : 0;
  }
  return kept;
}

int64_t SparsityMask::total_count() const { return total_elements(entries); }

double SaliencyMap::total() const {
  double acc = 0.0;
  for (const auto& [name, tensor] : entries) {
    for (int64_t i = 0; i < tensor.numel(); ++i) acc += tensor[i];
  }
  return acc;
}

ModelParams add_skip_connections(const ModelParams& params,
                                 const std::vector<SkipSpec>& skips) {
  if (skips.empty()) return params;

  auto augmented = params.config();
  NamedTensors entries = params.entries();
  std::visit(
      [&skips, &entries](auto& config) {
        const auto& stages = config.stages;
        auto channels_into = [&stages](int32_t index) {
          return index == 0 ? int64_t{3} : stages[static_cast<size_t>(index - 1)].channels;
        };
        for (const SkipSpec& s : skips) {
          config.skips.push_back(s);
          const std::string name = "skip" + std::to_string(s.source) + "to" +
                                   std::to_string(s.dest) + ".weight";
          if (find_tensor(entries, name)) {
            throw ConfigError("skip " + name + " already present");
          }
          entries.emplace_back(
              name, Tensor::zeros({channels_into(s.dest), channels_into(s.source), 1, 1, 1}));
        }
        validate_config(config);
      },
      augmented);
  return ModelParams(std::move(augmented), std::move(entries));
}

SaliencyMap connection_sensitivity(
    const NamedTensors& params,
    const std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)>& loss_builder) {
  if (params.empty()) throw ContractError("connection_sensitivity: no parameters");

  Graph g;
  std::map<std::string, NodeId> ids;
  for (const auto& [name, tensor] : params) {
    ids[name] = g.leaf(tensor.with_requires_grad(true), name);
  }
  const NodeId loss = loss_builder(g, ids);
  const double loss_value = g.value(loss).scalar_value();
  if (!std::isfinite(loss_value)) {
    throw NumericError("connection_sensitivity: non-finite loss");
  }
  const std::map<std::string, Tensor> grads = g.backward(loss);

  SaliencyMap map;
  double total = 0.0;
  for (const auto& [name, tensor] : params) {
    const Tensor& grad = grads.at(name);
    if (!grad.all_finite()) {
      throw NumericError("connection_sensitivity: non-finite gradient in layer " + name);
    }
    std::vector<double> scores(static_cast<size_t>(tensor.numel()));
    for (int64_t i = 0; i < tensor.numel(); ++i) {
      const double s = std::abs(grad[i] * tensor[i]);
      scores[static_cast<size_t>(i)] = s;
      total += s;
    }
    map.entries.emplace_back(name, Tensor::from_data(tensor.shape(), std::move(scores)));
  }
  if (!(total > 0.0)) {
    throw NumericError("connection_sensitivity: all scores are zero, nothing to rank");
  }
  const double inv = 1.0 / total;
  for (auto& [name, tensor] : map.entries) {
    std::vector<double> scaled(tensor.data().begin(), tensor.data().end());
    for (double& v : scaled) v *= inv;
    tensor = Tensor::from_data(tensor.shape(), std::move(scaled));
  }
  return map;
}

SparsityMask prune(const SaliencyMap& saliency, double ratio) {
  if (!(ratio >= 1.0) || !std::isfinite(ratio)) {
    throw ConfigError("compression ratio must be >= 1");
  }
  const int64_t total = total_elements(saliency.entries);
  if (total == 0) throw ContractError("prune: empty saliency map");
  const int64_t keep = std::llround(static_cast<double>(total) / ratio);
  if (keep == 0) {
    throw ConfigError("compression ratio " + std::to_string(ratio) +
                      " keeps zero of " + std::to_string(total) + " weights");
  }

  // Layer rank by name, lexicographic, for the tie-break order.
  std::vector<size_t> layer_order(saliency.entries.size());
  std::iota(layer_order.begin(), layer_order.end(), size_t{0});
  std::sort(layer_order.begin(), layer_order.end(), [&saliency](size_t a, size_t b) {
    return saliency.entries[a].first < saliency.entries[b].first;
  });
  std::vector<int64_t> layer_rank(saliency.entries.size());
  for (size_t r = 0; r < layer_order.size(); ++r) {
    layer_rank[layer_order[r]] = static_cast<int64_t>(r);
  }

  struct Scored {
    double score;
    int64_t layer_rank;
    size_t layer;
    int64_t index;
  };
  std::vector<Scored> pool;
  pool.reserve(static_cast<size_t>(total));
  for (size_t layer = 0; layer < saliency.entries.size(); ++layer) {
    const Tensor& scores = saliency.entries[layer].second;
    for (int64_t i = 0; i < scores.numel(); ++i) {
      if (scores[i] < 0.0) {
        throw ContractError("negative saliency in layer " + saliency.entries[layer].first);
      }
      pool.push_back({scores[i], layer_rank[layer], layer, i});
    }
  }
  std::sort(pool.begin(), pool.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.layer_rank != b.layer_rank) return a.layer_rank < b.layer_rank;
    return a.index < b.index;
  });

  std::vector<std::vector<double>> keep_flags(saliency.entries.size());
  for (size_t layer = 0; layer < saliency.entries.size(); ++layer) {
    keep_flags[layer].assign(static_cast<size_t>(saliency.entries[layer].second.numel()), 0.0);
  }
  for (int64_t i = 0; i < keep; ++i) {
    const Scored& s = pool[static_cast<size_t>(i)];
    keep_flags[s.layer][static_cast<size_t>(s.index)] = 1.0;
  }

  SparsityMask mask;
  mask.compression_ratio = ratio;
  for (size_t layer = 0; layer < saliency.entries.size(); ++layer) {
    mask.entries.emplace_back(
        saliency.entries[layer].first,
        Tensor::from_data(saliency.entries[layer].second.shape(),
                          std::move(keep_flags[layer])));
  }
  return mask;
}

void apply_mask(ModelParams& params, const SparsityMask& mask, const std::string& prefix) {
  for (const auto& [name, tensor] : params.entries()) {
    const Tensor* m = mask.find(prefix + name);
    if (!m) continue;
    if (!m->same_shape(tensor)) {
      throw ContractError("mask shape mismatch for layer " + prefix + name + ": " +
                          shape_str(m->shape()) + " vs " + shape_str(tensor.shape()));
    }
    std::vector<double> masked(static_cast<size_t>(tensor.numel()));
    for (int64_t i = 0; i < tensor.numel(); ++i) {
      masked[static_cast<size_t>(i)] = (*m)[i] != 0.0 ? tensor[i] : 0.0;
    }
    params.set_tensor(name, Tensor::from_data(tensor.shape(), std::move(masked)));
  }
}

void apply_mask(JointModel& model, const SparsityMask& mask) {
  apply_mask(model.enhancer, mask, kEnhancerPrefix);
  apply_mask(model.recovery, mask, kRecoveryPrefix);
}

}  // namespace rppg
