#pragma once

#include <cstddef>
#include <vector>

#include "sparseopt/errors.hpp"

namespace sparseopt {

/// Dense row-major tensor of 64-bit reals. Value semantics; every operation
/// is pure and uses a fixed left-to-right reduction order so results are
/// bit-reproducible across runs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);  // zero-filled
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor full(std::vector<std::size_t> shape, double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // rank-2 accessors
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  Tensor reshaped(std::vector<std::size_t> new_shape) const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// Standard matrix product, inner dimension summed left to right.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);

// dst += c * src
void add_scaled(Tensor& dst, const Tensor& src, double c);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double sum(const Tensor& a);

/// Indices of the k largest values, ties broken toward the lowest index.
/// Result sorted ascending by index.
std::vector<std::size_t> topk_indices(const Tensor& values, std::size_t k);

}  // namespace sparseopt
