#include "doctest.h"
#include "sparseopt/rng.hpp"
#include "sparseopt/tensor.hpp"

using namespace sparseopt;

namespace {

// independent oracle: naive triple loop, no shared code with matmul
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t p = 0; p < a.cols(); ++p)
        out.at(i, j) += a.at(i, p) * b.at(p, j);
  return out;
}

}  // namespace

TEST_CASE("matmul identity") {
  const Tensor id({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {3.5, -1.25, 2.0, 7.75});
  const Tensor out = matmul(id, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == m[i]);
}

TEST_CASE("matmul direct arithmetic") {
  const Tensor a({1, 2}, {1, 2});
  const Tensor b({2, 1}, {3, 4});
  const Tensor out = matmul(a, b);
  CHECK(out.shape() == std::vector<std::size_t>{1, 1});
  CHECK(out[0] == 11.0);
}

TEST_CASE("matmul matches naive triple-loop oracle") {
  RngStream rng(7);
  const Tensor a = rng.gaussian({5, 7}, 0.0, 1.0);
  const Tensor b = rng.gaussian({7, 3}, 0.0, 1.0);
  const Tensor got = matmul(a, b);
  const Tensor want = matmul_oracle(a, b);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("matmul shape mismatch") {
  const Tensor a({2, 3});
  const Tensor b({2, 3});
  CHECK_THROWS_AS((void)matmul(a, b), DimensionError);
  CHECK_THROWS_AS((void)matmul(a, Tensor({6})), DimensionError);
}

TEST_CASE("topk_indices") {
  const Tensor v({4}, {0.5, -0.2, 0.1, 0.9});
  CHECK(topk_indices(v, 2) == std::vector<std::size_t>{0, 3});
  CHECK(topk_indices(v, 0).empty());
  CHECK(topk_indices(v, 4) == std::vector<std::size_t>{0, 1, 2, 3});

  const Tensor ties({3}, {1, 1, 1});
  CHECK(topk_indices(ties, 2) == std::vector<std::size_t>{0, 1});

  CHECK_THROWS_AS((void)topk_indices(v, 5), std::invalid_argument);
}

TEST_CASE("elementwise ops commute with reshape") {
  RngStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = rng.gaussian({3, 4}, 0.0, 2.0);
    const Tensor b = rng.gaussian({3, 4}, 1.0, 0.5);
    const std::vector<std::size_t> flat{12};
    const Tensor lhs = add(a, b).reshaped(flat);
    const Tensor rhs = add(a.reshaped(flat), b.reshaped(flat));
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(lhs[i] == rhs[i]);
      CHECK(mul(a, b).reshaped(flat)[i] == mul(a.reshaped(flat), b.reshaped(flat))[i]);
      CHECK(sub(a, b).reshaped(flat)[i] == sub(a.reshaped(flat), b.reshaped(flat))[i]);
      CHECK(scale(a, 3.0).reshaped(flat)[i] == scale(a.reshaped(flat), 3.0)[i]);
    }
  }
}

TEST_CASE("tensor construction and reshape errors") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), DimensionError);
  CHECK_THROWS_AS((void)Tensor({4}).reshaped({5}), DimensionError);
  CHECK(Tensor::full({3}, 2.5).vec() == std::vector<double>{2.5, 2.5, 2.5});
}

TEST_CASE("add_scaled and norms") {
  Tensor a({3}, {1, 2, 3});
  const Tensor b({3}, {1, 1, 1});
  add_scaled(a, b, 0.5);
  CHECK(a.vec() == std::vector<double>{1.5, 2.5, 3.5});
  CHECK(dot(b, b) == 3.0);
  CHECK(l2_norm(Tensor({2}, {3, 4})) == 5.0);
  CHECK(sum(a) == doctest::Approx(7.5));
}
