#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rppg/errors.hpp"
#include "rppg/metrics.hpp"
#include "rppg/rng.hpp"

using namespace rppg;

namespace {

struct DirectMetrics {
  double mu;
  double rmse;
  double pct;
  double r;
};

DirectMetrics direct_formulas(const std::vector<double>& pred,
                              const std::vector<double>& truth) {
  const double n = static_cast<double>(pred.size());
  DirectMetrics out{};
  double within = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    out.mu += std::abs(e) / n;
    out.rmse += e * e / n;
    if (std::abs(e) < 5.0) within += 1.0;
  }
  out.rmse = std::sqrt(out.rmse);
  out.pct = 100.0 * within / n;

  double mx = 0.0;
  double my = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    mx += pred[i] / n;
    my += truth[i] / n;
  }
  double cov = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    cov += (pred[i] - mx) * (truth[i] - my);
    vx += (pred[i] - mx) * (pred[i] - mx);
    vy += (truth[i] - my) * (truth[i] - my);
  }
  out.r = cov / std::sqrt(vx * vy);
  return out;
}

}  // namespace

TEST_CASE("perfect predictions give zero errors and r = 1") {
  const std::vector<double> truth = {60.0, 72.0, 90.0, 120.0};
  const MetricsReport report = compute_metrics(truth, truth);
  CHECK(report.mu_error_bpm == 0.0);
  CHECK(report.rmse_bpm == 0.0);
  CHECK(report.pct_within_5bpm == 100.0);
  REQUIRE(report.pearson_r.has_value());
  CHECK(*report.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.n == 4);
}

TEST_CASE("a constant +4 offset keeps pct at 100 and r at 1") {
  const std::vector<double> truth = {60.0, 72.0, 90.0, 120.0};
  std::vector<double> pred = truth;
  for (double& v : pred) v += 4.0;
  const MetricsReport report = compute_metrics(pred, truth);
  CHECK(report.mu_error_bpm == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(report.rmse_bpm == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(report.pct_within_5bpm == 100.0);
  CHECK(*report.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("compute_metrics matches direct formulas on random pairs") {
  Rng rng(5);
  std::vector<double> pred(50);
  std::vector<double> truth(50);
  for (size_t i = 0; i < 50; ++i) {
    truth[i] = rng.uniform(45.0, 180.0);
    pred[i] = truth[i] + rng.uniform(-12.0, 12.0);
  }
  const MetricsReport report = compute_metrics(pred, truth);
  const DirectMetrics direct = direct_formulas(pred, truth);
  CHECK(std::abs(report.mu_error_bpm - direct.mu) <= 1e-12);
  CHECK(std::abs(report.rmse_bpm - direct.rmse) <= 1e-12);
  CHECK(report.pct_within_5bpm == direct.pct);
  CHECK(std::abs(*report.pearson_r - direct.r) <= 1e-12);
}

TEST_CASE("zero variance yields the undefined-r sentinel but valid errors") {
  const std::vector<double> truth = {70.0, 70.0, 70.0};
  const std::vector<double> pred = {71.0, 69.0, 70.0};
  const MetricsReport report = compute_metrics(pred, truth);
  CHECK(!report.pearson_r.has_value());
  CHECK(report.mu_error_bpm == doctest::Approx(2.0 / 3.0));
  CHECK(report.pct_within_5bpm == 100.0);
}

TEST_CASE("pearson_r on exact affine relations") {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> y(4);
  for (size_t i = 0; i < 4; ++i) y[i] = 2.0 * x[i] + 1.0;
  CHECK(*pearson_r(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  for (size_t i = 0; i < 4; ++i) y[i] = -x[i];
  CHECK(*pearson_r(x, y) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("pearson_r is symmetric and affine-covariant") {
  Rng rng(9);
  std::vector<double> x(30);
  std::vector<double> y(30);
  for (size_t i = 0; i < 30; ++i) {
    x[i] = rng.uniform(-3.0, 3.0);
    y[i] = rng.uniform(-3.0, 3.0);
  }
  const double base = *pearson_r(x, y);
  CHECK(std::abs(*pearson_r(y, x) - base) <= 1e-12);

  std::vector<double> scaled(30);
  for (size_t i = 0; i < 30; ++i) scaled[i] = 2.5 * x[i] + 7.0;
  CHECK(std::abs(*pearson_r(scaled, y) - base) <= 1e-12);
  for (size_t i = 0; i < 30; ++i) scaled[i] = -1.5 * x[i] + 2.0;
  CHECK(std::abs(*pearson_r(scaled, y) + base) <= 1e-12);
}

TEST_CASE("rmse dominates the mean absolute error on fuzzed inputs") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 2 + rng.below(40);
    std::vector<double> pred(n);
    std::vector<double> truth(n);
    for (size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform(0.0, 200.0);
      truth[i] = rng.uniform(0.0, 200.0);
    }
    const MetricsReport report = compute_metrics(pred, truth);
    CHECK(report.rmse_bpm >= report.mu_error_bpm - 1e-12);
  }
}

TEST_CASE("compute_metrics is invariant to paired permutations") {
  Rng rng(17);
  std::vector<double> pred(25);
  std::vector<double> truth(25);
  for (size_t i = 0; i < 25; ++i) {
    pred[i] = rng.uniform(50.0, 160.0);
    truth[i] = rng.uniform(50.0, 160.0);
  }
  const MetricsReport base = compute_metrics(pred, truth);

  std::vector<size_t> order(25);
  std::iota(order.begin(), order.end(), size_t{0});
  rng.shuffle(order);
  std::vector<double> pred_p(25);
  std::vector<double> truth_p(25);
  for (size_t i = 0; i < 25; ++i) {
    pred_p[i] = pred[order[i]];
    truth_p[i] = truth[order[i]];
  }
  const MetricsReport perm = compute_metrics(pred_p, truth_p);
  CHECK(std::abs(base.mu_error_bpm - perm.mu_error_bpm) <= 1e-12);
  CHECK(std::abs(base.rmse_bpm - perm.rmse_bpm) <= 1e-12);
  CHECK(base.pct_within_5bpm == perm.pct_within_5bpm);
  CHECK(std::abs(*base.pearson_r - *perm.pearson_r) <= 1e-12);
}

TEST_CASE("the JSON report round-trips exactly") {
  Rng rng(21);
  std::vector<double> pred(12);
  std::vector<double> truth(12);
  for (size_t i = 0; i < 12; ++i) {
    truth[i] = rng.uniform(50.0, 160.0);
    pred[i] = truth[i] + rng.uniform(-9.0, 9.0);
  }
  const MetricsReport report = compute_metrics(pred, truth);
  CHECK(metrics_from_json(metrics_to_json(report)) == report);

  MetricsReport undefined_r = report;
  undefined_r.pearson_r.reset();
  CHECK(metrics_from_json(metrics_to_json(undefined_r)) == undefined_r);
  CHECK_THROWS_AS(metrics_from_json("{"), FormatError);
  CHECK_THROWS_AS(metrics_from_json("{}"), FormatError);
}

TEST_CASE("the text table reproduces the benchmark row format") {
  MetricsReport report;
  report.mu_error_bpm = 3.9;
  report.rmse_bpm = 6.5;
  report.pct_within_5bpm = 93.7;
  report.pearson_r = 0.85;
  report.n = 20;
  const std::string table = metrics_table(report);
  const std::string expected_header =
      "framework    mu_error   rmse_bpm   pct_abs_err_lt_5bpm    r\n";
  const std::string expected_row =
      "ours         3.9        6.5        93.7                   0.85\n";
  CHECK(table == expected_header + expected_row);
}

TEST_CASE("length contracts are enforced") {
  const std::vector<double> one = {1.0};
  const std::vector<double> two = {1.0, 2.0};
  CHECK_THROWS_AS(compute_metrics(one, one), ContractError);
  CHECK_THROWS_AS(compute_metrics(two, one), ContractError);
  CHECK_THROWS_AS(pearson_r(one, one), ContractError);
}
