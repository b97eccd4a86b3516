#include "sparseopt/compare.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sparseopt/errors.hpp"

namespace sparseopt {

using nlohmann::json;

RunSeries load_run(const std::string& dir) {
  RunSeries run;
  run.dir = dir;
  std::ifstream in(dir + "/summary.json");
  if (!in) throw ConfigError("compare: missing summary.json in " + dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("compare: bad summary.json in " + dir + ": " + e.what());
  }
  run.label = j.value("optimizer", dir);
  run.fingerprint = j.value("dataset_model_fingerprint", "");
  run.metrics = read_metrics_csv(dir + "/metrics.csv");
  return run;
}

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

/// First epoch whose clean test accuracy reaches the threshold; -1 if never.
long epochs_to_threshold(const RunSeries& run, double threshold) {
  for (const auto& r : run.metrics)
    if (r.clean_test_acc >= threshold) return static_cast<long>(r.epoch) + 1;
  return -1;
}

void append_aligned(std::string& text, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i)
      widths[i] = std::max(widths[i], row[i].size());
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      text += row[i];
      if (i + 1 < row.size()) text.append(widths[i] - row[i].size() + 2, ' ');
    }
    text += '\n';
  }
}

}  // namespace

CompareResult compare_runs(const std::vector<std::string>& dirs,
                           std::vector<double> thresholds) {
  if (dirs.size() < 1) throw ConfigError("compare: need at least one run directory");
  std::vector<RunSeries> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  for (const auto& r : runs)
    if (r.fingerprint != runs.front().fingerprint)
      throw ConfigError("compare: " + r.dir + " was trained on a different dataset/model (fingerprint " +
                        r.fingerprint + " vs " + runs.front().fingerprint +
                        "); comparisons across datasets are not meaningful");

  if (thresholds.empty())
    thresholds = {0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.925, 0.95, 0.975, 0.99};
  std::sort(thresholds.begin(), thresholds.end());

  std::size_t common_epochs = runs.front().metrics.size();
  for (const auto& r : runs) common_epochs = std::min(common_epochs, r.metrics.size());

  CompareResult out;

  // accuracy at each epoch budget, with deltas against the first run
  {
    std::string csv = "epoch";
    for (const auto& r : runs) csv += ',' + r.label + '(' + r.dir + ')';
    for (std::size_t i = 1; i < runs.size(); ++i)
      csv += ",delta_" + std::to_string(i) + "_vs_0";
    csv += '\n';
    std::vector<std::vector<std::string>> table;
    {
      std::vector<std::string> head = {"epoch"};
      for (const auto& r : runs) head.push_back(r.label);
      for (std::size_t i = 1; i < runs.size(); ++i)
        head.push_back("d(" + runs[i].label + "-" + runs[0].label + ")");
      table.push_back(std::move(head));
    }
    for (std::size_t e = 0; e < common_epochs; ++e) {
      csv += std::to_string(runs.front().metrics[e].epoch);
      std::vector<std::string> row = {std::to_string(runs.front().metrics[e].epoch)};
      for (const auto& r : runs) {
        csv += ',' + format_double(r.metrics[e].clean_test_acc);
        row.push_back(fixed3(r.metrics[e].clean_test_acc));
      }
      for (std::size_t i = 1; i < runs.size(); ++i) {
        const double d =
            runs[i].metrics[e].clean_test_acc - runs[0].metrics[e].clean_test_acc;
        csv += ',' + format_double(d);
        row.push_back(fixed3(d));
      }
      csv += '\n';
      table.push_back(std::move(row));
    }
    out.budgets_csv = std::move(csv);
    out.text += "Clean test accuracy by epoch budget\n";
    append_aligned(out.text, table);
  }

  // epochs to reach each accuracy threshold
  {
    std::string csv = "threshold";
    for (const auto& r : runs) csv += ',' + r.label + '(' + r.dir + ')';
    csv += '\n';
    std::vector<std::vector<std::string>> table;
    {
      std::vector<std::string> head = {"threshold"};
      for (const auto& r : runs) head.push_back(r.label);
      table.push_back(std::move(head));
    }
    for (double th : thresholds) {
      csv += format_double(th);
      std::vector<std::string> row = {fixed3(th)};
      for (const auto& r : runs) {
        const long e = epochs_to_threshold(r, th);
        csv += ',' + (e < 0 ? std::string("") : std::to_string(e));
        row.push_back(e < 0 ? "-" : std::to_string(e));
      }
      csv += '\n';
      table.push_back(std::move(row));
    }
    out.thresholds_csv = std::move(csv);
    out.text += "\nEpochs to reach clean accuracy threshold\n";
    append_aligned(out.text, table);
  }

  return out;
}

}  // namespace sparseopt
