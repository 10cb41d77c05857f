#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rppg/conv3d.hpp"
#include "rppg/errors.hpp"
#include "rppg/graph.hpp"
#include "rppg/rng.hpp"
#include "rppg/tensor.hpp"
#include "support/oracles.hpp"

using namespace rppg;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> values(static_cast<size_t>(shape_numel(shape)));
  for (double& v : values) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(values));
}

double max_abs_gap(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("conv3d 1x1x1 identity kernel") {
  Rng rng(11);
  const Tensor input = random_tensor({1, 1, 3, 4, 5}, rng);
  const Tensor kernel = Tensor::from_data({1, 1, 1, 1, 1}, {1.0});
  const Tensor out = conv3d_forward(input, kernel, Conv3dSpec{});
  CHECK(out.same_shape(input));
  CHECK(max_abs_gap(out, input) == 0.0);
}

TEST_CASE("conv3d all-ones 3x3x3 kernel on all-ones input") {
  const Tensor input = Tensor::full({1, 1, 5, 5, 5}, 1.0);
  const Tensor kernel = Tensor::full({1, 1, 3, 3, 3}, 1.0);
  const Tensor out = conv3d_forward(input, kernel, Conv3dSpec{});
  CHECK(out.shape() == Shape{1, 1, 3, 3, 3});
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(27.0).epsilon(0));
}

TEST_CASE("conv3d matches the nested-loop reference on random cases") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 1 + static_cast<int64_t>(rng.below(2));
    const int64_t c = 1 + static_cast<int64_t>(rng.below(3));
    const int64_t k = 1 + static_cast<int64_t>(rng.below(3));
    Shape in_shape = {n, c, 0, 0, 0};
    Shape k_shape = {k, c, 0, 0, 0};
    Conv3dSpec spec;
    for (int a = 0; a < 3; ++a) {
      const int64_t kext = 1 + static_cast<int64_t>(rng.below(3));
      k_shape[static_cast<size_t>(2 + a)] = kext;
      in_shape[static_cast<size_t>(2 + a)] = kext + static_cast<int64_t>(rng.below(5));
      spec.stride[static_cast<size_t>(a)] = 1 + static_cast<int64_t>(rng.below(3));
      spec.pad[static_cast<size_t>(a)] = static_cast<int64_t>(rng.below(3));
    }
    const Tensor input = random_tensor(in_shape, rng);
    const Tensor kernel = random_tensor(k_shape, rng);
    const Tensor fast = conv3d_forward(input, kernel, spec);
    const Tensor ref = oracle::conv3d_reference(input, kernel, spec);
    CHECK(max_abs_gap(fast, ref) <= 1e-12);
  }
}

TEST_CASE("conv3d rejects bad shapes") {
  const Tensor input = Tensor::zeros({1, 2, 4, 4, 4});
  const Tensor kernel = Tensor::zeros({1, 3, 3, 3, 3});
  CHECK_THROWS_AS(conv3d_forward(input, kernel, Conv3dSpec{}), ContractError);

  const Tensor small = Tensor::zeros({1, 2, 2, 4, 4});
  const Tensor k2 = Tensor::zeros({1, 2, 3, 3, 3});
  CHECK_THROWS_AS(conv3d_forward(small, k2, Conv3dSpec{}), ConfigError);
}

TEST_CASE("conv3d forward is deterministic") {
  Rng rng(17);
  const Tensor input = random_tensor({2, 3, 4, 5, 6}, rng);
  const Tensor kernel = random_tensor({4, 3, 3, 3, 3}, rng);
  Conv3dSpec spec;
  spec.pad = {1, 1, 1};
  const Tensor a = conv3d_forward(input, kernel, spec);
  const Tensor b = conv3d_forward(input, kernel, spec);
  CHECK(std::memcmp(a.data().data(), b.data().data(),
                    static_cast<size_t>(a.numel()) * sizeof(double)) == 0);
}

TEST_CASE("masked kernels: zeros stored vs skipped give identical outputs") {
  // The tap loop skips exact zeros; the reference includes them. Equality
  // here is what lets a pruned model run sparse without changing results.
  Rng rng(77);
  Tensor input = random_tensor({1, 3, 5, 6, 6}, rng);
  std::vector<double> kdata(static_cast<size_t>(4 * 3 * 27));
  for (double& v : kdata) v = rng.below(10) < 7 ? 0.0 : rng.uniform(-1.0, 1.0);
  const Tensor kernel = Tensor::from_data({4, 3, 3, 3, 3}, std::move(kdata));
  Conv3dSpec spec;
  spec.pad = {1, 1, 1};
  const Tensor fast = conv3d_forward(input, kernel, spec);
  const Tensor ref = oracle::conv3d_reference(input, kernel, spec);
  for (int64_t i = 0; i < fast.numel(); ++i) CHECK(fast[i] == ref[i]);
}

TEST_CASE("backward of sum is all ones; unreached parameters get zeros") {
  Graph g;
  const NodeId w = g.leaf(Tensor::full({3, 2}, 0.5).with_requires_grad(true), "w");
  g.leaf(Tensor::full({4}, 1.0).with_requires_grad(true), "unused");
  const NodeId loss = op_sum(g, w);
  const auto grads = g.backward(loss);
  for (int64_t i = 0; i < 6; ++i) CHECK(grads.at("w")[i] == 1.0);
  for (int64_t i = 0; i < 4; ++i) CHECK(grads.at("unused")[i] == 0.0);
}

TEST_CASE("backward of sum(w^2)/2 equals w") {
  Rng rng(5);
  const Tensor point = random_tensor({7}, rng);
  Graph g;
  const NodeId w = g.leaf(point.with_requires_grad(true), "w");
  const NodeId loss = op_scale(g, op_sum(g, op_mul(g, w, w)), 0.5);
  const auto grads = g.backward(loss);
  CHECK(max_abs_gap(grads.at("w"), point) <= 1e-15);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Graph g;
  const NodeId w = g.leaf(Tensor::zeros({3}).with_requires_grad(true), "w");
  CHECK_THROWS_AS(g.backward(w), ContractError);
}

TEST_CASE("two-layer conv+relu network matches central finite differences") {
  Rng rng(31);
  NamedTensors params;
  params.emplace_back("k1", random_tensor({2, 1, 3, 3, 3}, rng, -0.8, 0.8));
  params.emplace_back("b1", random_tensor({2}, rng, 0.2, 0.6));
  params.emplace_back("k2", random_tensor({1, 2, 1, 1, 1}, rng, -0.8, 0.8));
  const Tensor input = random_tensor({1, 1, 4, 4, 4}, rng);

  const double err = grad_check_params(
      [&input](Graph& g, const std::map<std::string, NodeId>& ids) {
        const NodeId x = g.leaf(input);
        Conv3dSpec spec;
        spec.pad = {1, 1, 1};
        const NodeId h = op_relu(g, op_channel_bias(g, op_conv3d(g, x, ids.at("k1"), spec),
                                                    ids.at("b1")));
        const NodeId y = op_conv3d(g, h, ids.at("k2"), Conv3dSpec{});
        return op_mean(g, op_mul(g, y, y));
      },
      params, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check on a linear function is exact to rounding") {
  Rng rng(41);
  const Tensor point = random_tensor({6}, rng);
  const double err = grad_check(
      [](Graph& g, NodeId x) { return op_scale(g, op_sum(g, x), 3.0); }, point, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check on a quadratic is below 1e-7") {
  Rng rng(42);
  const Tensor point = random_tensor({6}, rng);
  const double err = grad_check(
      [](Graph& g, NodeId x) { return op_sum(g, op_mul(g, x, x)); }, point, 1e-5);
  CHECK(err < 1e-7);
}

TEST_CASE("grad_check validates eps") {
  CHECK_THROWS_AS(grad_check([](Graph& g, NodeId x) { return op_sum(g, x); },
                             Tensor::zeros({2}), 0.0),
                  ConfigError);
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Graph g;
  const NodeId x = g.leaf(Tensor::from_data({3}, {-1.0, 0.0, 2.0}).with_requires_grad(true), "x");
  const NodeId loss = op_sum(g, op_relu(g, x));
  const auto grads = g.backward(loss);
  CHECK(grads.at("x")[0] == 0.0);
  CHECK(grads.at("x")[1] == 0.0);
  CHECK(grads.at("x")[2] == 1.0);
}

TEST_CASE("logistic and sqrt backward against finite differences") {
  Rng rng(51);
  const Tensor point = random_tensor({5}, rng, 0.3, 2.0);
  const double err_logistic = grad_check(
      [](Graph& g, NodeId x) { return op_sum(g, op_logistic(g, x)); }, point, 1e-6);
  CHECK(err_logistic < 1e-8);
  const double err_sqrt =
      grad_check([](Graph& g, NodeId x) { return op_sum(g, op_sqrt(g, x)); }, point, 1e-6);
  CHECK(err_sqrt < 1e-7);
}

TEST_CASE("spatial_mean and channel_bias backward against finite differences") {
  Rng rng(61);
  const Tensor point = random_tensor({1, 2, 3, 2, 2}, rng);
  const double err_pool = grad_check(
      [](Graph& g, NodeId x) {
        const NodeId pooled = op_spatial_mean(g, x);
        return op_sum(g, op_mul(g, pooled, pooled));
      },
      point, 1e-6);
  CHECK(err_pool < 1e-8);

  const Tensor bias = random_tensor({2}, rng);
  const double err_bias = grad_check(
      [&bias](Graph& g, NodeId x) {
        const NodeId b = g.leaf(bias);
        const NodeId y = op_channel_bias(g, x, b);
        return op_sum(g, op_mul(g, y, y));
      },
      point, 1e-6);
  CHECK(err_bias < 1e-8);
}

TEST_CASE("reshape keeps gradients flowing") {
  Rng rng(71);
  const Tensor point = random_tensor({2, 6}, rng);
  const double err = grad_check(
      [](Graph& g, NodeId x) {
        const NodeId flat = op_reshape(g, x, {12});
        return op_sum(g, op_mul(g, flat, flat));
      },
      point, 1e-6);
  CHECK(err < 1e-8);
}

TEST_CASE("finite forward values on finite inputs") {
  Rng rng(81);
  const Tensor input = random_tensor({1, 2, 4, 4, 4}, rng);
  const Tensor kernel = random_tensor({3, 2, 3, 3, 3}, rng);
  Conv3dSpec spec;
  spec.pad = {1, 1, 1};
  Graph g;
  const NodeId x = g.leaf(input);
  const NodeId k = g.leaf(kernel);
  const NodeId y = op_logistic(g, op_relu(g, op_conv3d(g, x, k, spec)));
  CHECK(g.value(y).all_finite());
}
