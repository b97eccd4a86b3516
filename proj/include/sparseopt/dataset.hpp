#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sparseopt/rng.hpp"
#include "sparseopt/tensor.hpp"

namespace sparseopt {

struct Dataset {
  Tensor inputs;                    // [n, d]
  std::vector<std::size_t> labels;  // length n, values in [0, classes)
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.rank() == 2 ? inputs.cols() : 0; }
};

/// Mini-batch view materialized from a dataset. sample_ids index into the
/// originating dataset so a gradient at the anchor can be evaluated on the
/// same examples.
struct Batch {
  Tensor inputs;  // [n, d]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> sample_ids;

  std::size_t size() const { return labels.size(); }
};

Batch take_batch(const Dataset& data, const std::vector<std::size_t>& ids);
Batch whole_as_batch(const Dataset& data);

/// CSV with d feature columns followed by one integer label column.
/// classes == 0 infers the class count as max(label)+1.
Dataset load_csv(const std::string& path, std::size_t classes = 0);

struct BlobsSplit {
  Dataset train;
  Dataset test;
};

/// Synthetic Gaussian blobs in [0,1]^dim. Class centers are drawn uniformly
/// in [0,1]^dim from the given stream, then train and test points are drawn
/// around them with per-coordinate std 1/(4*separation) and clamped to
/// [0,1]. Draw order is centers, train points, test points, so train and
/// test share centers for any fixed stream.
BlobsSplit make_blobs(std::size_t classes, std::size_t dim,
                      std::size_t train_per_class, std::size_t test_per_class,
                      double separation, RngStream rng);

}  // namespace sparseopt
