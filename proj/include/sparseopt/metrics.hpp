#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace sparseopt {

/// One training epoch's record. Wall time is kept out of metrics.csv so a
/// repeated run produces a byte-identical file; it goes to timing.csv.
struct MetricsRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double clean_test_acc = 0.0;
  std::optional<double> robust_test_acc;  // adversarial runs only
  std::optional<double> c_hat;            // estimate at the epoch's snapshot
  std::optional<double> c_smoothed;       // adaptive-weight runs only
  std::optional<double> anchor_corr;      // true correlation trace
  double mean_grad_norm = 0.0;
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsCsvHeader =
    "epoch,train_loss,clean_test_acc,robust_test_acc,c_hat,c_smoothed,anchor_corr,"
    "mean_grad_norm";

/// Round-trippable decimal formatting (%.17g) so equal doubles print equal.
std::string format_double(double v);

std::string metrics_csv_row(const MetricsRecord& r);
MetricsRecord parse_metrics_csv_row(const std::string& line);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

void write_timing_csv(const std::string& path, const std::vector<MetricsRecord>& rows);

}  // namespace sparseopt
