#include "rppg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "rppg/errors.hpp"

namespace rppg {

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractError("pearson_r needs two equal-length sequences of size >= 2");
  }
  const double n = static_cast<double>(x.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mean_x += x[i];
    mean_y += y[i];
  }
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mean_x;
    const double dy = y[i] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

MetricsReport compute_metrics(std::span<const double> pred_bpm,
                              std::span<const double> truth_bpm) {
  if (pred_bpm.size() != truth_bpm.size() || pred_bpm.size() < 2) {
    throw ContractError("compute_metrics needs two equal-length sequences of size >= 2");
  }
  MetricsReport report;
  report.n = static_cast<int64_t>(pred_bpm.size());
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  int64_t within = 0;
  for (size_t i = 0; i < pred_bpm.size(); ++i) {
    const double err = pred_bpm[i] - truth_bpm[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (std::abs(err) < 5.0) ++within;
  }
  const double n = static_cast<double>(report.n);
  report.mu_error_bpm = abs_sum / n;
  report.rmse_bpm = std::sqrt(sq_sum / n);
  report.pct_within_5bpm = 100.0 * static_cast<double>(within) / n;
  report.pearson_r = pearson_r(pred_bpm, truth_bpm);
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["mu_error_bpm"] = report.mu_error_bpm;
  j["rmse_bpm"] = report.rmse_bpm;
  j["pct_within_5bpm"] = report.pct_within_5bpm;
  if (report.pearson_r) {
    j["pearson_r"] = *report.pearson_r;
  } else {
    j["pearson_r"] = nullptr;
  }
  j["n"] = report.n;
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("bad metrics JSON: ") + e.what());
  }
  MetricsReport report;
  try {
    report.mu_error_bpm = j.at("mu_error_bpm").get<double>();
    report.rmse_bpm = j.at("rmse_bpm").get<double>();
    report.pct_within_5bpm = j.at("pct_within_5bpm").get<double>();
    if (!j.at("pearson_r").is_null()) report.pearson_r = j.at("pearson_r").get<double>();
    report.n = j.at("n").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics JSON is missing fields: ") + e.what());
  }
  return report;
}

std::string metrics_table(const MetricsReport& report, const std::string& label) {
  char row[160];
  std::string r_text = "n/a";
  if (report.pearson_r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *report.pearson_r);
    r_text = buf;
  }
  std::string out;
  std::snprintf(row, sizeof(row), "%-12s %-10s %-10s %-22s %s\n", "framework", "mu_error",
                "rmse_bpm", "pct_abs_err_lt_5bpm", "r");
  out += row;
  std::snprintf(row, sizeof(row), "%-12s %-10.1f %-10.1f %-22.1f %s\n", label.c_str(),
                report.mu_error_bpm, report.rmse_bpm, report.pct_within_5bpm,
                r_text.c_str());
  out += row;
  return out;
}

}  // namespace rppg
