#include "rppg/graph.hpp"

#include <cmath>
#include <set>
#include <utility>

#include "rppg/errors.hpp"

namespace rppg {

GradBuffers::GradBuffers(const Graph& graph)
    : graph_(graph), buffers_(static_cast<size_t>(graph.node_count())) {}

std::span<double> GradBuffers::at(NodeId id) {
  auto& buf = buffers_[static_cast<size_t>(id)];
  if (buf.empty()) {
    buf.assign(static_cast<size_t>(graph_.value(id).numel()), 0.0);
  }
  return buf;
}

NodeId Graph::leaf(Tensor value, std::string name) {
  if (!value.defined()) throw ContractError("leaf tensor is undefined");
  if (value.requires_grad()) {
    if (name.empty()) {
      throw ContractError("requires_grad leaf needs a name");
    }
    for (const Node& n : nodes_) {
      if (n.name == name) throw ContractError("duplicate leaf name: " + name);
    }
  }
  nodes_.push_back(Node{"leaf", {}, std::move(value), nullptr, std::move(name)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::add_node(std::string op, std::vector<NodeId> inputs, Tensor value,
                       BackwardFn backward) {
  for (NodeId in : inputs) check_id(in);
  nodes_.push_back(
      Node{std::move(op), std::move(inputs), std::move(value), std::move(backward), {}});
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id);
  return nodes_[static_cast<size_t>(id)].value;
}

void Graph::check_id(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw ContractError("node id " + std::to_string(id) + " out of range");
  }
}

std::map<std::string, Tensor> Graph::backward(NodeId loss) const {
  check_id(loss);
  if (value(loss).numel() != 1) {
    throw ContractError("backward needs a scalar loss node, got shape " +
                        shape_str(value(loss).shape()));
  }
  GradBuffers bufs(*this);
  bufs.at(loss)[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    const Node& node = nodes_[static_cast<size_t>(id)];
    if (!bufs.touched(id) || !node.backward) continue;
    node.backward(*this, node.inputs, bufs.at(id), bufs);
  }
  std::map<std::string, Tensor> grads;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    if (!node.value.requires_grad() || node.backward) continue;
    const NodeId id = static_cast<NodeId>(i);
    grads[node.name] = bufs.touched(id)
                           ? Tensor::from_data(node.value.shape(), bufs.take(id))
                           : Tensor::zeros(node.value.shape());
  }
  return grads;
}

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  }
}

std::vector<double> copy_of(std::span<const double> s) {
  return std::vector<double>(s.begin(), s.end());
}

}  // namespace

NodeId op_add(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  check_same_shape("add", ta, tb);
  std::vector<double> out = copy_of(ta.data());
  for (int64_t i = 0; i < tb.numel(); ++i) out[static_cast<size_t>(i)] += tb[i];
  return g.add_node("add", {a, b}, Tensor::from_data(ta.shape(), std::move(out)),
                    [](const Graph&, const std::vector<NodeId>& in,
                       std::span<const double> gout, GradBuffers& sink) {
                      for (int k = 0; k < 2; ++k) {
                        std::span<double> gin = sink.at(in[static_cast<size_t>(k)]);
                        for (size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
                      }
                    });
}

NodeId op_sub(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  check_same_shape("sub", ta, tb);
  std::vector<double> out = copy_of(ta.data());
  for (int64_t i = 0; i < tb.numel(); ++i) out[static_cast<size_t>(i)] -= tb[i];
  return g.add_node("sub", {a, b}, Tensor::from_data(ta.shape(), std::move(out)),
                    [](const Graph&, const std::vector<NodeId>& in,
                       std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> ga = sink.at(in[0]);
                      for (size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
                      std::span<double> gb = sink.at(in[1]);
                      for (size_t i = 0; i < gout.size(); ++i) gb[i] -= gout[i];
                    });
}

NodeId op_mul(Graph& g, NodeId a, NodeId b) {
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  check_same_shape("mul", ta, tb);
  std::vector<double> out(static_cast<size_t>(ta.numel()));
  for (int64_t i = 0; i < ta.numel(); ++i) out[static_cast<size_t>(i)] = ta[i] * tb[i];
  return g.add_node("mul", {a, b}, Tensor::from_data(ta.shape(), std::move(out)),
                    [](const Graph& gr, const std::vector<NodeId>& in,
                       std::span<const double> gout, GradBuffers& sink) {
                      const Tensor& va = gr.value(in[0]);
                      const Tensor& vb = gr.value(in[1]);
                      std::span<double> ga = sink.at(in[0]);
                      for (size_t i = 0; i < gout.size(); ++i) {
                        ga[i] += gout[i] * vb[static_cast<int64_t>(i)];
                      }
                      std::span<double> gb = sink.at(in[1]);
                      for (size_t i = 0; i < gout.size(); ++i) {
                        gb[i] += gout[i] * va[static_cast<int64_t>(i)];
                      }
                    });
}

NodeId op_scale(Graph& g, NodeId a, double c) {
  const Tensor& ta = g.value(a);
  std::vector<double> out(static_cast<size_t>(ta.numel()));
  for (int64_t i = 0; i < ta.numel(); ++i) out[static_cast<size_t>(i)] = c * ta[i];
  return g.add_node("scale", {a}, Tensor::from_data(ta.shape(), std::move(out)),
                    [c](const Graph&, const std::vector<NodeId>& in,
                        std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> gin = sink.at(in[0]);
                      for (size_t i = 0; i < gout.size(); ++i) gin[i] += c * gout[i];
                    });
}

NodeId op_relu(Graph& g, NodeId a) {
  const Tensor& ta = g.value(a);
  std::vector<double> out(static_cast<size_t>(ta.numel()));
  for (int64_t i = 0; i < ta.numel(); ++i) {
    out[static_cast<size_t>(i)] = ta[i] > 0.0 ? ta[i] : 0.0;
  }
  return g.add_node("relu", {a}, Tensor::from_data(ta.shape(), std::move(out)),
                    [](const Graph& gr, const std::vector<NodeId>& in,
                       std::span<const double> gout, GradBuffers& sink) {
                      const Tensor& x = gr.value(in[0]);
                      std::span<double> gin = sink.at(in[0]);
                      for (size_t i = 0; i < gout.size(); ++i) {
                        if (x[static_cast<int64_t>(i)] > 0.0) gin[i] += gout[i];
                      }
                    });
}

NodeId op_logistic(Graph& g, NodeId a) {
  const Tensor& ta = g.value(a);
  std::vector<double> out(static_cast<size_t>(ta.numel()));
  for (int64_t i = 0; i < ta.numel(); ++i) {
    out[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-ta[i]));
  }
  Tensor value = Tensor::from_data(ta.shape(), std::move(out));
  return g.add_node("logistic", {a}, value,
                    [value](const Graph&, const std::vector<NodeId>& in,
                            std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> gin = sink.at(in[0]);
                      for (size_t i = 0; i < gout.size(); ++i) {
                        const double y = value[static_cast<int64_t>(i)];
                        gin[i] += gout[i] * y * (1.0 - y);
                      }
                    });
}

NodeId op_sqrt(Graph& g, NodeId a) {
  const Tensor& ta = g.value(a);
  std::vector<double> out(static_cast<size_t>(ta.numel()));
  for (int64_t i = 0; i < ta.numel(); ++i) {
    if (ta[i] < 0.0) {
      throw NumericError("sqrt of negative value " + std::to_string(ta[i]));
    }
    out[static_cast<size_t>(i)] = std::sqrt(ta[i]);
  }
  Tensor value = Tensor::from_data(ta.shape(), std::move(out));
  return g.add_node("sqrt", {a}, value,
                    [value](const Graph&, const std::vector<NodeId>& in,
                            std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> gin = sink.at(in[0]);
                      for (size_t i = 0; i < gout.size(); ++i) {
                        const double y = value[static_cast<int64_t>(i)];
                        if (y > 0.0) gin[i] += gout[i] * 0.5 / y;
                      }
                    });
}

NodeId op_sum(Graph& g, NodeId a) {
  const Tensor& ta = g.value(a);
  double acc = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) acc += ta[i];
  return g.add_node("sum", {a}, Tensor::scalar(acc),
                    [](const Graph&, const std::vector<NodeId>& in,
                       std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> gin = sink.at(in[0]);
                      for (size_t i = 0; i < gin.size(); ++i) gin[i] += gout[0];
                    });
}

NodeId op_mean(Graph& g, NodeId a) {
  const Tensor& ta = g.value(a);
  double acc = 0.0;
  for (int64_t i = 0; i < ta.numel(); ++i) acc += ta[i];
  const double inv_n = 1.0 / static_cast<double>(ta.numel());
  return g.add_node("mean", {a}, Tensor::scalar(acc * inv_n),
                    [inv_n](const Graph&, const std::vector<NodeId>& in,
                            std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> gin = sink.at(in[0]);
                      for (size_t i = 0; i < gin.size(); ++i) gin[i] += gout[0] * inv_n;
                    });
}

NodeId op_reshape(Graph& g, NodeId a, Shape shape) {
  Tensor value = g.value(a).reshaped(std::move(shape));
  return g.add_node("reshape", {a}, std::move(value),
                    [](const Graph&, const std::vector<NodeId>& in,
                       std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> gin = sink.at(in[0]);
                      for (size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
                    });
}

NodeId op_conv3d(Graph& g, NodeId input, NodeId kernel, const Conv3dSpec& spec) {
  const Tensor& tin = g.value(input);
  const Tensor& tker = g.value(kernel);
  const Conv3dDims dims = conv3d_dims(tin.shape(), tker.shape(), spec);
  Tensor value = conv3d_forward(tin, tker, spec);
  return g.add_node("conv3d", {input, kernel}, std::move(value),
                    [dims](const Graph& gr, const std::vector<NodeId>& in,
                           std::span<const double> gout, GradBuffers& sink) {
                      conv3d_grad_input(gout, gr.value(in[1]).data(), dims, sink.at(in[0]));
                      conv3d_grad_kernel(gout, gr.value(in[0]).data(), dims, sink.at(in[1]));
                    });
}

NodeId op_channel_bias(Graph& g, NodeId x, NodeId bias) {
  const Tensor& tx = g.value(x);
  const Tensor& tb = g.value(bias);
  if (tx.shape().size() < 2) {
    throw ContractError("channel_bias input must be at least rank 2, got " +
                        shape_str(tx.shape()));
  }
  if (tb.shape().size() != 1 || tb.shape()[0] != tx.shape()[1]) {
    throw ContractError("channel_bias: bias " + shape_str(tb.shape()) +
                        " does not match channel axis of " + shape_str(tx.shape()));
  }
  const int64_t channels = tx.shape()[1];
  const int64_t batch = tx.shape()[0];
  int64_t inner = 1;
  for (size_t a = 2; a < tx.shape().size(); ++a) inner *= tx.shape()[a];

  std::vector<double> out = copy_of(tx.data());
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t c = 0; c < channels; ++c) {
      double* p = out.data() + (n * channels + c) * inner;
      const double b = tb[c];
      for (int64_t i = 0; i < inner; ++i) p[i] += b;
    }
  }
  return g.add_node(
      "channel_bias", {x, bias}, Tensor::from_data(tx.shape(), std::move(out)),
      [batch, channels, inner](const Graph&, const std::vector<NodeId>& in,
                               std::span<const double> gout, GradBuffers& sink) {
        std::span<double> gx = sink.at(in[0]);
        for (size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i];
        std::span<double> gb = sink.at(in[1]);
        for (int64_t n = 0; n < batch; ++n) {
          for (int64_t c = 0; c < channels; ++c) {
            const double* p = gout.data() + (n * channels + c) * inner;
            double acc = 0.0;
            for (int64_t i = 0; i < inner; ++i) acc += p[i];
            gb[static_cast<size_t>(c)] += acc;
          }
        }
      });
}

NodeId op_spatial_mean(Graph& g, NodeId x) {
  const Tensor& tx = g.value(x);
  if (tx.shape().size() != 5) {
    throw ContractError("spatial_mean input must be rank 5 [N,C,T,H,W], got " +
                        shape_str(tx.shape()));
  }
  const int64_t outer = tx.shape()[0] * tx.shape()[1] * tx.shape()[2];
  const int64_t plane = tx.shape()[3] * tx.shape()[4];
  const double inv = 1.0 / static_cast<double>(plane);

  std::vector<double> out(static_cast<size_t>(outer));
  const double* p = tx.data().data();
  for (int64_t o = 0; o < outer; ++o) {
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) acc += p[o * plane + i];
    out[static_cast<size_t>(o)] = acc * inv;
  }
  Shape out_shape = {tx.shape()[0], tx.shape()[1], tx.shape()[2], 1, 1};
  return g.add_node("spatial_mean", {x}, Tensor::from_data(out_shape, std::move(out)),
                    [outer, plane, inv](const Graph&, const std::vector<NodeId>& in,
                                        std::span<const double> gout, GradBuffers& sink) {
                      std::span<double> gin = sink.at(in[0]);
                      for (int64_t o = 0; o < outer; ++o) {
                        const double go = gout[static_cast<size_t>(o)] * inv;
                        double* gp = gin.data() + o * plane;
                        for (int64_t i = 0; i < plane; ++i) gp[i] += go;
                      }
                    });
}

namespace {

double checked_scalar(const Tensor& value, const char* what) {
  const double v = value.scalar_value();
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + what + " during gradient check");
  }
  return v;
}

double relative_gap(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double grad_check(const std::function<NodeId(Graph&, NodeId)>& fn, const Tensor& point,
                  double eps) {
  if (eps <= 0.0) throw ConfigError("grad_check eps must be positive");

  Graph g;
  const NodeId x = g.leaf(point.with_requires_grad(true), "x");
  const NodeId loss = fn(g, x);
  checked_scalar(g.value(loss), "loss");
  const Tensor analytic = g.backward(loss).at("x");
  if (!analytic.all_finite()) throw NumericError("non-finite analytic gradient");

  auto eval_at = [&fn](const Tensor& p) {
    Graph h;
    const NodeId xp = h.leaf(p);
    return checked_scalar(h.value(fn(h, xp)), "perturbed loss");
  };

  double worst = 0.0;
  std::vector<double> base(point.data().begin(), point.data().end());
  for (int64_t i = 0; i < point.numel(); ++i) {
    std::vector<double> bumped = base;
    bumped[static_cast<size_t>(i)] = base[static_cast<size_t>(i)] + eps;
    const double f_plus = eval_at(Tensor::from_data(point.shape(), bumped));
    bumped[static_cast<size_t>(i)] = base[static_cast<size_t>(i)] - eps;
    const double f_minus = eval_at(Tensor::from_data(point.shape(), std::move(bumped)));
    const double numeric = (f_plus - f_minus) / (2.0 * eps);
    worst = std::max(worst, relative_gap(analytic[i], numeric));
  }
  return worst;
}

double grad_check_params(
    const std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)>& fn,
    const NamedTensors& params, double eps) {
  if (eps <= 0.0) throw ConfigError("grad_check eps must be positive");

  auto build = [&fn](const NamedTensors& entries, bool with_grad,
                     std::map<std::string, Tensor>* grads_out) {
    Graph g;
    std::map<std::string, NodeId> ids;
    for (const auto& [name, tensor] : entries) {
      ids[name] = g.leaf(tensor.with_requires_grad(with_grad), name);
    }
    const NodeId loss = fn(g, ids);
    const double v = checked_scalar(g.value(loss), "loss");
    if (grads_out) *grads_out = g.backward(loss);
    return v;
  };

  std::map<std::string, Tensor> analytic;
  build(params, true, &analytic);

  double worst = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    const auto& [name, tensor] = params[p];
    const Tensor& grad = analytic.at(name);
    if (!grad.all_finite()) throw NumericError("non-finite gradient for " + name);
    std::vector<double> base(tensor.data().begin(), tensor.data().end());
    for (int64_t i = 0; i < tensor.numel(); ++i) {
      NamedTensors bumped = params;
      std::vector<double> values = base;
      values[static_cast<size_t>(i)] = base[static_cast<size_t>(i)] + eps;
      bumped[p].second = Tensor::from_data(tensor.shape(), values);
      const double f_plus = build(bumped, false, nullptr);
      values[static_cast<size_t>(i)] = base[static_cast<size_t>(i)] - eps;
      bumped[p].second = Tensor::from_data(tensor.shape(), std::move(values));
      const double f_minus = build(bumped, false, nullptr);
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      worst = std::max(worst, relative_gap(grad[i], numeric));
    }
  }
  return worst;
}

}  // namespace rppg
