#pragma once

#include <cstddef>
#include <vector>

#include "sparseopt/model.hpp"
#include "sparseopt/rng.hpp"
#include "sparseopt/sparsity.hpp"

namespace sparseopt {

/// Pearson correlation. Bitwise-identical inputs return exactly 1.0;
/// a constant vector raises UndefinedCorrelationError. Output clamped to
/// [-1, 1].
double pearson_correlation(const std::vector<double>& a, const std::vector<double>& b);

/// Values of `ps` at the coordinates the mask leaves active (mask == 1),
/// in layout order. Bias tensors are always fully active.
std::vector<double> active_coordinates(const ParamSet& ps, const Mask& mask);

/// Correlation between the full-dataset gradient at the given parameters
/// and at a copy with Gaussian noise added to every weight, measured over
/// the active coordinates.
double gradient_correlation_under_perturbation(const ModelSpec& spec,
                                               const ParamSet& params, const Mask& mask,
                                               const Dataset& data, double stddev,
                                               RngStream& rng);

/// Mean over active coordinates of the across-batch variance of batch
/// gradients at Gaussian-perturbed parameters. Batches are the fixed
/// partition of the dataset into consecutive chunks of batch_size (the
/// final partial chunk included); the variance denominator is the batch
/// count.
double gradient_variance_under_perturbation(const ModelSpec& spec, const ParamSet& params,
                                            const Mask& mask, const Dataset& data,
                                            std::size_t batch_size, double stddev,
                                            RngStream& rng);

/// One diagnostic measurement: mean over replicates, each replicate drawn
/// from substream(replicate index) of the given stream.
struct DiagnosticReport {
  double sparsity = 0.0;
  std::size_t replicates = 0;
  double perturbation_std = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> per_replicate;
  double mean = 0.0;
};

enum class DiagnosticKind { Correlation, Variance };

DiagnosticReport run_diagnostic(DiagnosticKind kind, const ModelSpec& spec,
                                const ParamSet& params, const Mask& mask,
                                const Dataset& data, std::size_t batch_size,
                                double stddev, std::size_t replicates,
                                std::uint64_t seed);

}  // namespace sparseopt
