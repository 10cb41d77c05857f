#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rppg/conv3d.hpp"
#include "rppg/tensor.hpp"

namespace rppg {

using NodeId = int32_t;

class Graph;

// Per-node gradient buffers, allocated lazily during a backward sweep.
class GradBuffers {
 public:
  explicit GradBuffers(const Graph& graph);
  // Zero-initialized buffer sized like the node's value.
  std::span<double> at(NodeId id);
  bool touched(NodeId id) const { return !buffers_[static_cast<size_t>(id)].empty(); }
  std::vector<double> take(NodeId id) { return std::move(buffers_[static_cast<size_t>(id)]); }

 private:
  const Graph& graph_;
  std::vector<std::vector<double>> buffers_;
};

using BackwardFn = std::function<void(const Graph&, const std::vector<NodeId>&,
                                      std::span<const double>, GradBuffers&)>;

// Recorded computation graph for reverse-mode differentiation. Nodes are
// appended in evaluation order, so the list is topological by construction.
// A graph is single-threaded; distinct graphs share no mutable state.
class Graph {
 public:
  // Leaves with requires_grad must carry a unique non-empty name; backward()
  // reports their gradients under that name.
  NodeId leaf(Tensor value, std::string name = {});

  NodeId add_node(std::string op, std::vector<NodeId> inputs, Tensor value,
                  BackwardFn backward);

  const Tensor& value(NodeId id) const;
  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

  // dLoss/dParam for every named requires_grad leaf. Leaves the loss does not
  // reach get zero tensors. The loss node must hold a single element.
  std::map<std::string, Tensor> backward(NodeId loss) const;

 private:
  struct Node {
    std::string op;
    std::vector<NodeId> inputs;
    Tensor value;
    BackwardFn backward;
    std::string name;
  };
  std::vector<Node> nodes_;

  void check_id(NodeId id) const;
};

// Elementwise and structural operations. Same-shape operands are required;
// the only implicit broadcast is scalar-times-tensor via op_scale.
NodeId op_add(Graph& g, NodeId a, NodeId b);
NodeId op_sub(Graph& g, NodeId a, NodeId b);
NodeId op_mul(Graph& g, NodeId a, NodeId b);
NodeId op_scale(Graph& g, NodeId a, double c);
NodeId op_relu(Graph& g, NodeId a);
NodeId op_logistic(Graph& g, NodeId a);
// Elementwise square root; inputs must be non-negative. The subgradient at 0
// is taken as 0.
NodeId op_sqrt(Graph& g, NodeId a);
NodeId op_sum(Graph& g, NodeId a);   // -> rank-0 scalar
NodeId op_mean(Graph& g, NodeId a);  // -> rank-0 scalar
NodeId op_reshape(Graph& g, NodeId a, Shape shape);
NodeId op_conv3d(Graph& g, NodeId input, NodeId kernel, const Conv3dSpec& spec);
// x is [N,C,...]; bias [C] is added to every element of channel c.
NodeId op_channel_bias(Graph& g, NodeId x, NodeId bias);
// [N,C,T,H,W] -> [N,C,T,1,1] mean over the spatial axes.
NodeId op_spatial_mean(Graph& g, NodeId x);

// Max over coordinates of |analytic - central_difference| / max(1, |analytic|)
// for the scalar function built by `fn` at `point`. Throws NumericError when
// an evaluation is non-finite and ConfigError when eps <= 0.
double grad_check(const std::function<NodeId(Graph&, NodeId)>& fn, const Tensor& point,
                  double eps);

// Same check over a set of named parameters; every coordinate of every entry
// is perturbed.
double grad_check_params(
    const std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)>& fn,
    const NamedTensors& params, double eps);

}  // namespace rppg
