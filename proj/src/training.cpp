#include "rppg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rppg/checkpoint.hpp"
#include "rppg/errors.hpp"
#include "rppg/rng.hpp"

namespace rppg {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (steps < 1) throw ConfigError("step count must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (crop_frames < 1) throw ConfigError("crop_frames must be >= 1");
  if (!(loss_weights.recon >= 0.0) || !(loss_weights.loop >= 0.0)) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("moment coefficients must lie in [0,1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

namespace {

double rms_difference(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace

LossBreakdown joint_loss(const VideoClip& enhanced, const VideoClip& target,
                         const RppgSignal& pred, const RppgSignal& ref,
                         const LossWeights& weights) {
  if (!enhanced.frames.same_shape(target.frames)) {
    throw ContractError("joint_loss: clip shape mismatch " +
                        shape_str(enhanced.frames.shape()) + " vs " +
                        shape_str(target.frames.shape()));
  }
  if (pred.samples.size() != ref.samples.size() || pred.samples.empty()) {
    throw ContractError("joint_loss: signal length mismatch");
  }
  LossBreakdown out;
  out.weights = weights;
  out.recon_rmse = rms_difference(enhanced.frames.data(), target.frames.data());
  out.loop = rms_difference(pred.samples, ref.samples);
  out.total = weights.recon * out.recon_rmse + weights.loop * out.loop;
  return out;
}

JointLossNodes joint_loss_graph(Graph& g, const std::map<std::string, NodeId>& enh_leaves,
                                const std::map<std::string, NodeId>& rec_leaves,
                                const JointModel& model, NodeId low, NodeId high,
                                const LossWeights& weights) {
  const NodeId enhanced = forward_graph(g, model.enhancer, enh_leaves, low);
  const NodeId pred = forward_graph(g, model.recovery, rec_leaves, enhanced);
  const NodeId ref = forward_graph(g, model.recovery, rec_leaves, high);

  const NodeId recon_diff = op_sub(g, enhanced, high);
  const NodeId recon = op_sqrt(g, op_mean(g, op_mul(g, recon_diff, recon_diff)));
  const NodeId loop_diff = op_sub(g, pred, ref);
  const NodeId loop = op_sqrt(g, op_mean(g, op_mul(g, loop_diff, loop_diff)));
  const NodeId total =
      op_add(g, op_scale(g, recon, weights.recon), op_scale(g, loop, weights.loop));
  return {total, recon, loop};
}

namespace {

struct JointGraph {
  Graph graph;
  JointLossNodes nodes;
};

JointGraph build_joint_graph(const JointModel& model, const Tensor& low, const Tensor& high,
                             const LossWeights& weights) {
  JointGraph jg;
  const NodeId low_leaf = jg.graph.leaf(low);
  const NodeId high_leaf = jg.graph.leaf(high);
  const auto enh_leaves = add_param_leaves(jg.graph, model.enhancer, kEnhancerPrefix);
  const auto rec_leaves = add_param_leaves(jg.graph, model.recovery, kRecoveryPrefix);
  jg.nodes = joint_loss_graph(jg.graph, enh_leaves, rec_leaves, model, low_leaf, high_leaf,
                              weights);
  return jg;
}

LossBreakdown breakdown_from(const JointGraph& jg, const LossWeights& weights) {
  LossBreakdown out;
  out.weights = weights;
  out.total = jg.graph.value(jg.nodes.total).scalar_value();
  out.recon_rmse = jg.graph.value(jg.nodes.recon_rmse).scalar_value();
  out.loop = jg.graph.value(jg.nodes.loop).scalar_value();
  return out;
}

}  // namespace

Tensor adam_update(const Tensor& param, const Tensor& grad, Tensor& first, Tensor& second,
                   int64_t step_number, const AdamHyper& hyper) {
  if (!param.same_shape(grad) || !param.same_shape(first) || !param.same_shape(second)) {
    throw ContractError("adam_update: shape mismatch");
  }
  if (step_number < 1) throw ContractError("adam_update: step numbers start at 1");
  const double bias1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step_number));
  const double bias2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step_number));

  const int64_t n = param.numel();
  std::vector<double> m_next(static_cast<size_t>(n));
  std::vector<double> v_next(static_cast<size_t>(n));
  std::vector<double> updated(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double gi = grad[i];
    const double mi = hyper.beta1 * first[i] + (1.0 - hyper.beta1) * gi;
    const double vi = hyper.beta2 * second[i] + (1.0 - hyper.beta2) * gi * gi;
    m_next[static_cast<size_t>(i)] = mi;
    v_next[static_cast<size_t>(i)] = vi;
    updated[static_cast<size_t>(i)] =
        param[i] -
        hyper.learning_rate * (mi / bias1) / (std::sqrt(vi / bias2) + hyper.epsilon);
  }
  first = Tensor::from_data(param.shape(), std::move(m_next));
  second = Tensor::from_data(param.shape(), std::move(v_next));
  return Tensor::from_data(param.shape(), std::move(updated));
}

LossBreakdown train_step(JointModel& model, const Tensor& low, const Tensor& high,
                         const SparsityMask* mask, AdamState& state,
                         const TrainConfig& config) {
  config.validate();
  if (!low.same_shape(high)) {
    throw ContractError("train_step: batch shape mismatch " + shape_str(low.shape()) +
                        " vs " + shape_str(high.shape()));
  }
  JointGraph jg = build_joint_graph(model, low, high, config.loss_weights);
  const LossBreakdown loss = breakdown_from(jg, config.loss_weights);
  if (!std::isfinite(loss.total)) {
    throw NumericError("train_step: non-finite loss, aborting the step");
  }
  const std::map<std::string, Tensor> grads = jg.graph.backward(jg.nodes.total);

  state.step += 1;
  const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2,
                        config.adam_epsilon};
  for (const auto& [name, param] : joint_entries(model)) {
    const Tensor& grad = grads.at(name);
    if (!grad.all_finite()) {
      throw NumericError("train_step: non-finite gradient for " + name);
    }
    auto m_it = state.first_moment.find(name);
    if (m_it == state.first_moment.end()) {
      m_it = state.first_moment.emplace(name, Tensor::zeros(param.shape())).first;
      state.second_moment.emplace(name, Tensor::zeros(param.shape()));
    }
    Tensor updated =
        adam_update(param, grad, m_it->second, state.second_moment.at(name), state.step, hyper);

    const Tensor* mask_tensor = mask ? mask->find(name) : nullptr;
    if (mask_tensor) {
      if (!mask_tensor->same_shape(param)) {
        throw ContractError("train_step: mask shape mismatch for " + name);
      }
      std::vector<double> masked(static_cast<size_t>(param.numel()));
      for (int64_t i = 0; i < param.numel(); ++i) {
        masked[static_cast<size_t>(i)] = (*mask_tensor)[i] != 0.0 ? updated[i] : 0.0;
      }
      updated = Tensor::from_data(param.shape(), std::move(masked));
    }
    update_joint_entries(model, name, std::move(updated));
  }
  return loss;
}

SaliencyMap saliency_on_batch(const JointModel& model, const Tensor& low, const Tensor& high,
                              const LossWeights& weights) {
  return connection_sensitivity(
      joint_entries(model),
      [&model, &low, &high, &weights](Graph& g, const std::map<std::string, NodeId>& ids) {
        const NodeId low_leaf = g.leaf(low);
        const NodeId high_leaf = g.leaf(high);
        std::map<std::string, NodeId> enh_leaves;
        std::map<std::string, NodeId> rec_leaves;
        for (const auto& [name, id] : ids) {
          const std::string enh = kEnhancerPrefix;
          const std::string rec = kRecoveryPrefix;
          if (name.rfind(enh, 0) == 0) {
            enh_leaves[name.substr(enh.size())] = id;
          } else if (name.rfind(rec, 0) == 0) {
            rec_leaves[name.substr(rec.size())] = id;
          }
        }
        return joint_loss_graph(g, enh_leaves, rec_leaves, model, low_leaf, high_leaf,
                                weights)
            .total;
      });
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  std::vector<ManifestEntry> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() < 2) {
      throw FormatError("manifest line " + std::to_string(line_no) +
                        " needs at least low and high paths");
    }
    ManifestEntry entry;
    entry.low = resolve(cols[0]);
    entry.high = resolve(cols[1]);
    for (size_t i = 2; i < cols.size(); ++i) {
      if (cols[i].empty()) continue;
      char* end = nullptr;
      const double value = std::strtod(cols[i].c_str(), &end);
      if (end && *end == '\0') {
        entry.truth_bpm = value;
      } else {
        entry.roi = resolve(cols[i]);
      }
    }
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw FormatError("manifest " + path.string() + " lists no pairs");
  return entries;
}

std::vector<LoadedPair> load_pairs(const std::vector<ManifestEntry>& entries) {
  std::vector<LoadedPair> pairs;
  pairs.reserve(entries.size());
  for (const ManifestEntry& e : entries) {
    VideoClip low = read_clip(e.low);
    VideoClip high = read_clip(e.high);
    if (e.roi) {
      const RoiBox box = read_roi_file(*e.roi);
      low = crop_roi(low, box);
      high = crop_roi(high, box);
    }
    if (!low.frames.same_shape(high.frames)) {
      throw ContractError("pair shape mismatch: " + e.low.string() + " vs " +
                          e.high.string());
    }
    LoadedPair pair;
    pair.low = clip_to_input(low).reshaped({3, low.frame_count(), low.height(), low.width()});
    pair.high =
        clip_to_input(high).reshaped({3, high.frame_count(), high.height(), high.width()});
    pair.fps = low.fps;
    pair.truth_bpm = e.truth_bpm;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

Batch make_batch(const std::vector<LoadedPair>& pairs, const std::vector<size_t>& indices,
                 const std::vector<int64_t>& offsets, int64_t crop_frames) {
  if (indices.empty() || indices.size() != offsets.size()) {
    throw ContractError("make_batch: empty selection");
  }
  const Shape& ref = pairs[indices[0]].low.shape();
  const int64_t t_ext = ref[1];
  const int64_t crop = std::min(crop_frames, t_ext);
  const int64_t h_ext = ref[2];
  const int64_t w_ext = ref[3];
  const int64_t batch = static_cast<int64_t>(indices.size());
  const int64_t item = 3 * crop * h_ext * w_ext;
  const int64_t plane = h_ext * w_ext;

  std::vector<double> low_data(static_cast<size_t>(batch * item));
  std::vector<double> high_data(static_cast<size_t>(batch * item));
  for (int64_t b = 0; b < batch; ++b) {
    const LoadedPair& pair = pairs[indices[static_cast<size_t>(b)]];
    if (!shapes_equal(pair.low.shape(), ref)) {
      throw ContractError("make_batch: mixed clip shapes in one batch");
    }
    const int64_t offset = offsets[static_cast<size_t>(b)];
    if (offset < 0 || offset + crop > t_ext) {
      throw ContractError("make_batch: crop offset out of range");
    }
    for (int64_t c = 0; c < 3; ++c) {
      const double* lp = pair.low.data().data() + (c * t_ext + offset) * plane;
      const double* hp = pair.high.data().data() + (c * t_ext + offset) * plane;
      double* ld = low_data.data() + b * item + c * crop * plane;
      double* hd = high_data.data() + b * item + c * crop * plane;
      std::memcpy(ld, lp, static_cast<size_t>(crop * plane) * sizeof(double));
      std::memcpy(hd, hp, static_cast<size_t>(crop * plane) * sizeof(double));
    }
  }
  Batch out;
  out.low = Tensor::from_data({batch, 3, crop, h_ext, w_ext}, std::move(low_data));
  out.high = Tensor::from_data({batch, 3, crop, h_ext, w_ext}, std::move(high_data));
  return out;
}

FitResult fit(JointModel& model, const TrainConfig& config,
              const std::filesystem::path& manifest_path, const SparsityMask* mask,
              const std::filesystem::path& out_dir) {
  config.validate();
  const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
  const std::vector<LoadedPair> pairs = load_pairs(entries);
  std::filesystem::create_directories(out_dir);

  Rng rng(config.seed);
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  rng.shuffle(order);
  size_t cursor = 0;

  AdamState state;
  FitResult result;
  result.curve.reserve(static_cast<size_t>(config.steps));
  for (int64_t step = 0; step < config.steps; ++step) {
    std::vector<size_t> indices;
    std::vector<int64_t> offsets;
    for (int64_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const size_t idx = order[cursor++];
      indices.push_back(idx);
      const int64_t t_ext = pairs[idx].low.shape()[1];
      const int64_t crop = std::min(config.crop_frames, t_ext);
      offsets.push_back(static_cast<int64_t>(
          rng.below(static_cast<uint64_t>(t_ext - crop + 1))));
    }
    const Batch batch = make_batch(pairs, indices, offsets, config.crop_frames);
    result.curve.push_back(train_step(model, batch.low, batch.high, mask, state, config));
  }

  result.loss_csv_path = out_dir / "loss.csv";
  {
    std::ofstream csv(result.loss_csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + result.loss_csv_path.string());
    csv << "step,total,recon_rmse,loop\n";
    char line[128];
    for (size_t i = 0; i < result.curve.size(); ++i) {
      const LossBreakdown& l = result.curve[i];
      std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g\n", i + 1, l.total,
                    l.recon_rmse, l.loop);
      csv << line;
    }
  }
  result.checkpoint_path = out_dir / "model.rpck";
  save_checkpoint(joint_entries(model), mask, result.checkpoint_path);
  return result;
}

}  // namespace rppg
