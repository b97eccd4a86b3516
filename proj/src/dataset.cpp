#include "sparseopt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sparseopt {

Batch take_batch(const Dataset& data, const std::vector<std::size_t>& ids) {
  const std::size_t d = data.dim();
  Batch b;
  b.inputs = Tensor({ids.size(), d});
  b.labels.reserve(ids.size());
  b.sample_ids = ids;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t i = ids[r];
    if (i >= data.size()) throw std::out_of_range("take_batch: sample id out of range");
    for (std::size_t c = 0; c < d; ++c) b.inputs.at(r, c) = data.inputs.at(i, c);
    b.labels.push_back(data.labels[i]);
  }
  return b;
}

Batch whole_as_batch(const Dataset& data) {
  std::vector<std::size_t> ids(data.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return take_batch(data, ids);
}

Dataset load_csv(const std::string& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: non-numeric cell at line " +
                                 std::to_string(line_no));
      }
    }
    if (row.size() < 2)
      throw std::runtime_error("load_csv: need at least one feature and a label, line " +
                               std::to_string(line_no));
    if (dim == 0) {
      dim = row.size() - 1;
    } else if (row.size() - 1 != dim) {
      throw std::runtime_error("load_csv: inconsistent column count at line " +
                               std::to_string(line_no));
    }
    const double lab = row.back();
    row.pop_back();
    if (lab < 0 || lab != std::floor(lab))
      throw std::runtime_error("load_csv: label must be a non-negative integer, line " +
                               std::to_string(line_no));
    labels.push_back(static_cast<std::size_t>(lab));
    values.insert(values.end(), row.begin(), row.end());
  }
  if (labels.empty()) throw std::runtime_error("load_csv: empty file " + path);

  Dataset data;
  data.inputs = Tensor({labels.size(), dim}, std::move(values));
  data.labels = std::move(labels);
  const std::size_t max_label = *std::max_element(data.labels.begin(), data.labels.end());
  data.classes = classes == 0 ? max_label + 1 : classes;
  if (max_label >= data.classes)
    throw std::runtime_error("load_csv: label exceeds declared class count");
  return data;
}

namespace {

Dataset draw_blob_points(const Tensor& centers, std::size_t per_class,
                         std::size_t classes, std::size_t dim, double noise_std,
                         RngStream& rng) {
  Dataset data;
  data.classes = classes;
  data.inputs = Tensor({classes * per_class, dim});
  data.labels.reserve(classes * per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double v = centers.at(c, j) + rng.next_gaussian(0.0, noise_std);
        data.inputs.at(row, j) = std::clamp(v, 0.0, 1.0);
      }
      data.labels.push_back(c);
    }
  }
  return data;
}

}  // namespace

BlobsSplit make_blobs(std::size_t classes, std::size_t dim,
                      std::size_t train_per_class, std::size_t test_per_class,
                      double separation, RngStream rng) {
  if (classes < 2) throw std::invalid_argument("make_blobs: need at least 2 classes");
  if (dim == 0) throw std::invalid_argument("make_blobs: dim must be positive");
  if (separation <= 0.0) throw std::invalid_argument("make_blobs: separation must be > 0");

  Tensor centers({classes, dim});
  for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = rng.next_double();
  const double noise_std = 1.0 / (4.0 * separation);

  BlobsSplit split;
  split.train = draw_blob_points(centers, train_per_class, classes, dim, noise_std, rng);
  split.test = draw_blob_points(centers, test_per_class, classes, dim, noise_std, rng);
  return split;
}

}  // namespace sparseopt
