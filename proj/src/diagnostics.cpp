#include "sparseopt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparseopt {

double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("pearson: need at least 2 values");
  if (a == b) return 1.0;

  const auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(a) || constant(b))
    throw UndefinedCorrelationError("pearson: zero-variance vector");

  const auto n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw UndefinedCorrelationError("pearson: zero-variance vector");
  return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

std::vector<double> active_coordinates(const ParamSet& ps, const Mask& mask) {
  if (!ps.same_layout(mask.tensors))
    throw DimensionError("active_coordinates: layout mismatch");
  std::vector<double> out;
  auto mit = mask.tensors.begin();
  for (const auto& [name, t] : ps) {
    const Tensor& mt = mit->second;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (mt[i] != 0.0) out.push_back(t[i]);
    ++mit;
  }
  return out;
}

namespace {

// Gaussian noise on every coordinate, pruned ones included; the probe asks
// how the gradient field looks a small distance away, and for a sparse
// model that distance re-activates the pruned directions.
ParamSet perturb_all(const ParamSet& params, double stddev, RngStream& rng) {
  if (stddev < 0.0) throw std::invalid_argument("perturb: stddev must be >= 0");
  if (stddev == 0.0) return params;
  ParamSet out = params;
  for (auto& [name, t] : out)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += rng.next_gaussian(0.0, stddev);
  return out;
}

}  // namespace

double gradient_correlation_under_perturbation(const ModelSpec& spec,
                                               const ParamSet& params, const Mask& mask,
                                               const Dataset& data, double stddev,
                                               RngStream& rng) {
  const ParamSet base_grad = full_gradient(spec, params, data);
  const ParamSet perturbed = perturb_all(params, stddev, rng);
  const ParamSet pert_grad = full_gradient(spec, perturbed, data);
  return pearson_correlation(active_coordinates(base_grad, mask),
                             active_coordinates(pert_grad, mask));
}

double gradient_variance_under_perturbation(const ModelSpec& spec, const ParamSet& params,
                                            const Mask& mask, const Dataset& data,
                                            std::size_t batch_size, double stddev,
                                            RngStream& rng) {
  if (batch_size == 0 || batch_size > data.size())
    throw std::invalid_argument("gradient_variance: batch_size must be in [1, N]");
  const ParamSet perturbed = perturb_all(params, stddev, rng);

  std::vector<std::vector<double>> batch_grads;
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    ids.resize(end - start);
    for (std::size_t i = start; i < end; ++i) ids[i - start] = i;
    const LossGrad lg = loss_and_grad(spec, perturbed, take_batch(data, ids));
    batch_grads.push_back(active_coordinates(lg.grad, mask));
  }

  const std::size_t n_batches = batch_grads.size();
  const std::size_t n_coords = batch_grads.front().size();
  if (n_coords == 0) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < n_coords; ++j) {
    double mean = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) mean += batch_grads[b][j];
    mean /= static_cast<double>(n_batches);
    double var = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const double d = batch_grads[b][j] - mean;
      var += d * d;
    }
    total += var / static_cast<double>(n_batches);
  }
  return total / static_cast<double>(n_coords);
}

DiagnosticReport run_diagnostic(DiagnosticKind kind, const ModelSpec& spec,
                                const ParamSet& params, const Mask& mask,
                                const Dataset& data, std::size_t batch_size,
                                double stddev, std::size_t replicates,
                                std::uint64_t seed) {
  if (replicates == 0) throw std::invalid_argument("diagnostic: replicates must be >= 1");
  DiagnosticReport report;
  report.sparsity = mask.weight_sparsity();
  report.replicates = replicates;
  report.perturbation_std = stddev;
  report.seed = seed;
  RngStream root = RngStream(seed).substream(stream_key::kDiagnostics);
  for (std::size_t r = 0; r < replicates; ++r) {
    RngStream rep = root.substream(r);
    const double value =
        kind == DiagnosticKind::Correlation
            ? gradient_correlation_under_perturbation(spec, params, mask, data, stddev, rep)
            : gradient_variance_under_perturbation(spec, params, mask, data, batch_size,
                                                   stddev, rep);
    report.per_replicate.push_back(value);
    report.mean += value;
  }
  report.mean /= static_cast<double>(replicates);
  return report;
}

}  // namespace sparseopt
