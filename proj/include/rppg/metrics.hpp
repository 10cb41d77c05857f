#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace rppg {

// The four benchmark columns plus the pair count. pearson_r is empty when
// either sequence has zero variance.
struct MetricsReport {
  double mu_error_bpm = 0.0;
  double rmse_bpm = 0.0;
  double pct_within_5bpm = 0.0;
  std::optional<double> pearson_r;
  int64_t n = 0;

  bool operator==(const MetricsReport&) const = default;
};

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y);

MetricsReport compute_metrics(std::span<const double> pred_bpm,
                              std::span<const double> truth_bpm);

// Keys: mu_error_bpm, rmse_bpm, pct_within_5bpm, pearson_r (null when
// undefined), n. parse(emit(report)) == report.
std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& json_text);

// Two-line aligned table in the benchmark column order:
// mu_error, RMSE, % absolute error < 5 bpm, r.
std::string metrics_table(const MetricsReport& report, const std::string& label = "ours");

}  // namespace rppg
