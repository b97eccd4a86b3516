#pragma once

#include <string>
#include <vector>

#include "sparseopt/metrics.hpp"

namespace sparseopt {

struct RunSeries {
  std::string dir;
  std::string label;        // optimizer name from summary.json
  std::string fingerprint;  // dataset+model fingerprint
  std::vector<MetricsRecord> metrics;
};

struct CompareResult {
  std::string text;            // aligned plain-text tables
  std::string budgets_csv;     // accuracy at each epoch budget per run
  std::string thresholds_csv;  // epochs to reach each accuracy threshold
};

RunSeries load_run(const std::string& dir);

/// Per-epoch-budget accuracy table plus epochs-to-threshold table. Runs
/// must share the dataset/model fingerprint; mismatches are refused.
CompareResult compare_runs(const std::vector<std::string>& dirs,
                           std::vector<double> thresholds = {});

}  // namespace sparseopt
