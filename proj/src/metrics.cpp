#include "sparseopt/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sparseopt {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

std::optional<double> parse_optional(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  return std::stod(cell);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::string metrics_csv_row(const MetricsRecord& r) {
  std::string row = std::to_string(r.epoch);
  row += ',' + format_double(r.train_loss);
  row += ',' + format_double(r.clean_test_acc);
  row += ',' + format_optional(r.robust_test_acc);
  row += ',' + format_optional(r.c_hat);
  row += ',' + format_optional(r.c_smoothed);
  row += ',' + format_optional(r.anchor_corr);
  row += ',' + format_double(r.mean_grad_norm);
  return row;
}

MetricsRecord parse_metrics_csv_row(const std::string& line) {
  const auto cells = split_csv(line);
  if (cells.size() != 8)
    throw std::runtime_error("metrics: malformed row: " + line);
  MetricsRecord r;
  r.epoch = std::stoul(cells[0]);
  r.train_loss = std::stod(cells[1]);
  r.clean_test_acc = std::stod(cells[2]);
  r.robust_test_acc = parse_optional(cells[3]);
  r.c_hat = parse_optional(cells[4]);
  r.c_smoothed = parse_optional(cells[5]);
  r.anchor_corr = parse_optional(cells[6]);
  r.mean_grad_norm = std::stod(cells[7]);
  return r;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("metrics: cannot write " + path);
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) out << metrics_csv_row(r) << '\n';
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader)
    throw std::runtime_error("metrics: unexpected header in " + path);
  std::vector<MetricsRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_metrics_csv_row(line));
  }
  return rows;
}

void write_timing_csv(const std::string& path, const std::vector<MetricsRecord>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("metrics: cannot write " + path);
  out << "epoch,wall_seconds\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << format_double(r.wall_seconds) << '\n';
}

}  // namespace sparseopt
