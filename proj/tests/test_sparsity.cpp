#include <cmath>

#include "doctest.h"
#include "sparseopt/sparsity.hpp"

using namespace sparseopt;

namespace {

ParamSet two_layer_params(std::size_t in1, std::size_t out1, std::size_t out2) {
  ParamSet ps;
  ps.add("layer0.weight", Tensor({in1, out1}));
  ps.add("layer0.bias", Tensor({out1}));
  ps.add("layer1.weight", Tensor({out1, out2}));
  ps.add("layer1.bias", Tensor({out2}));
  return ps;
}

std::size_t tensor_nnz(const Tensor& t) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) n += t[i] != 0.0 ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("dense init mask is all ones") {
  const ParamSet ps = two_layer_params(4, 3, 2);
  SparsitySchedule sched;
  sched.target_sparsity = 0.0;
  RngStream rng(1);
  const Mask m = init_mask(ps, sched, rng);
  for (const auto& [name, t] : m.tensors)
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 1.0);
  CHECK(m.weight_sparsity() == 0.0);
}

TEST_CASE("uniform init hits the exact count per tensor") {
  ParamSet ps;
  ps.add("layer0.weight", Tensor({10, 10}));
  ps.add("layer0.bias", Tensor({10}));
  SparsitySchedule sched;
  sched.target_sparsity = 0.9;
  RngStream rng(2);
  const Mask m = init_mask(ps, sched, rng);
  CHECK(tensor_nnz(m.tensors.at("layer0.weight")) == 10);
  CHECK(tensor_nnz(m.tensors.at("layer0.bias")) == 10);  // biases stay dense
  CHECK(m.weight_sparsity() == doctest::Approx(0.9));
}

TEST_CASE("erk allocation caps the small layer and hits the global count") {
  // direct evaluation of the allocation rule: raw = (in+out)/(in*out) gives
  // 0.2 for 10x10 and 0.6 for 10x2; at global density 0.5 the small layer
  // caps at 1.0 and the big one solves to 0.4.
  const ParamSet ps = two_layer_params(10, 10, 2);
  SparsitySchedule sched;
  sched.target_sparsity = 0.5;
  sched.distribution = MaskDistribution::Erk;
  RngStream rng(3);
  const Mask m = init_mask(ps, sched, rng);
  const std::size_t nnz0 = tensor_nnz(m.tensors.at("layer0.weight"));
  const std::size_t nnz1 = tensor_nnz(m.tensors.at("layer1.weight"));
  CHECK(nnz0 + nnz1 == 60);
  CHECK(nnz1 == 20);  // capped dense
  const double density0 = double(nnz0) / 100.0;
  const double density1 = double(nnz1) / 20.0;
  CHECK(density1 > density0);
}

TEST_CASE("init mask rejects sparsity >= 1") {
  const ParamSet ps = two_layer_params(4, 3, 2);
  SparsitySchedule sched;
  sched.target_sparsity = 1.0;
  RngStream rng(4);
  CHECK_THROWS_AS((void)init_mask(ps, sched, rng), std::invalid_argument);
}

TEST_CASE("apply_mask: identity, zeroing, idempotence") {
  RngStream rng(5);
  ParamSet ps = two_layer_params(4, 3, 2);
  for (auto& [name, t] : ps) t = rng.gaussian(t.shape(), 0.0, 1.0);

  const Mask ones = Mask::ones_like(ps);
  CHECK(ps_equal(apply_mask(ps, ones), ps));

  Mask zeros = ones;
  for (auto& [name, t] : zeros.tensors)
    if (is_weight_name(name)) std::fill(t.vec().begin(), t.vec().end(), 0.0);
  const ParamSet wiped = apply_mask(ps, zeros);
  for (const auto& [name, t] : wiped) {
    if (is_weight_name(name))
      for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);
    else
      CHECK(t.vec() == ps.at(name).vec());
  }

  SparsitySchedule sched;
  sched.target_sparsity = 0.5;
  RngStream rng2(6);
  const Mask half = init_mask(ps, sched, rng2);
  const ParamSet once = apply_mask(ps, half);
  CHECK(ps_equal(apply_mask(once, half), once));
}

TEST_CASE("set update: tiny drop fraction is a no-op") {
  ParamSet ps;
  ps.add("layer0.weight", Tensor({2, 2}, {0.5, -0.2, 0.1, 0.9}));
  ps.add("layer0.bias", Tensor({2}));
  const Mask m = Mask::ones_like(ps);
  RngStream rng(7);
  const Mask after = set_update(ps, m, 0.1, rng);  // floor(0.1*4) == 0
  CHECK(after.tensors.at("layer0.weight").vec() == m.tensors.at("layer0.weight").vec());
  CHECK(ps.at("layer0.weight").vec() == std::vector<double>{0.5, -0.2, 0.1, 0.9});
}

TEST_CASE("set update prunes smallest magnitudes and regrows among inactive") {
  ParamSet ps;
  ps.add("layer0.weight", Tensor({2, 2}, {0.5, -0.2, 0.1, 0.9}));
  ps.add("layer0.bias", Tensor({2}));
  const Mask m = Mask::ones_like(ps);
  RngStream rng(8);
  const Mask after = set_update(ps, m, 0.5, rng);  // prune 2: indices 1,2
  // all positions were active, so the only growth candidates are the two
  // just-pruned slots; both come back active with zeroed weights
  CHECK(after.tensors.at("layer0.weight").vec() == std::vector<double>{1, 1, 1, 1});
  CHECK(ps.at("layer0.weight").vec() == std::vector<double>{0.5, 0.0, 0.0, 0.9});
}

TEST_CASE("set update preserves nnz across random cases") {
  RngStream rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    ParamSet ps;
    const std::size_t rows = 2 + rng.next_below(6);
    const std::size_t cols = 2 + rng.next_below(6);
    ps.add("layer0.weight", rng.gaussian({rows, cols}, 0.0, 1.0));
    ps.add("layer0.bias", Tensor({cols}));
    SparsitySchedule sched;
    sched.target_sparsity = 0.5;
    RngStream mask_rng = rng.substream(trial);
    Mask m = init_mask(ps, sched, mask_rng);
    ps = apply_mask(ps, m);
    const std::size_t before = m.weight_nnz();
    const double p = 0.01 + 0.98 * rng.next_double();
    const Mask after = set_update(ps, m, p, rng);
    CHECK(after.weight_nnz() == before);
  }
}

TEST_CASE("rigl growth follows the dense gradient, ties to the lowest index") {
  ParamSet ps;
  ps.add("layer0.weight", Tensor({2, 2}, {0.5, -0.2, 0.1, 0.9}));
  ps.add("layer0.bias", Tensor({2}));
  Mask m = Mask::ones_like(ps);
  m.tensors.at("layer0.weight") = Tensor({2, 2}, {1, 0, 0, 1});  // 2 active
  ps = apply_mask(ps, m);
  RngStream rng(10);

  SUBCASE("single clearly-largest inactive gradient wins") {
    ParamSet grad = zeros_like(ps);
    grad.at("layer0.weight") = Tensor({2, 2}, {0.0, 0.05, 4.0, 0.0});
    // prune 1 (smallest active |w| is index 0: |0.5| vs |0.9|), grow 1 at
    // index 2 which has the dominant gradient magnitude
    const Mask after = rigl_update(ps, m, grad, 0.5, rng);
    CHECK(after.tensors.at("layer0.weight").vec() == std::vector<double>{0, 0, 1, 1});
    CHECK(ps.at("layer0.weight")[2] == 0.0);
  }

  SUBCASE("all-zero inactive gradients fall back to lowest index") {
    const ParamSet grad = zeros_like(ps);
    const Mask after = rigl_update(ps, m, grad, 0.5, rng);
    // candidates after pruning index 0: {0, 1, 2}; zero grads tie, lowest wins
    CHECK(after.tensors.at("layer0.weight").vec() == std::vector<double>{1, 0, 0, 1});
  }
}

TEST_CASE("rigl on a 4-weight tensor: exhaustive prune/grow bookkeeping") {
  // every possible dominant-gradient position, including the just-pruned one
  for (std::size_t hot = 0; hot < 4; ++hot) {
    ParamSet ps;
    ps.add("layer0.weight", Tensor({2, 2}, {0.5, -0.2, 0.0, 0.9}));
    ps.add("layer0.bias", Tensor({2}));
    Mask m = Mask::ones_like(ps);
    m.tensors.at("layer0.weight") = Tensor({2, 2}, {1, 1, 0, 1});
    ps = apply_mask(ps, m);

    ParamSet grad = zeros_like(ps);
    grad.at("layer0.weight")[hot] = 2.0;
    RngStream rng(11);
    const Mask after = rigl_update(ps, m, grad, 0.4, rng);  // prune 1: index 1
    CHECK(after.weight_nnz() == 3);
    // growth candidates are {1, 2}; the hot position wins only if it
    // qualifies as a candidate, otherwise the tie-break picks index 1
    const std::size_t expected = (hot == 1 || hot == 2) ? hot : 1;
    CHECK(after.tensors.at("layer0.weight")[expected] == 1.0);
  }
}

TEST_CASE("apply_mask rejects mismatched layouts") {
  ParamSet ps = two_layer_params(4, 3, 2);
  Mask wrong = Mask::ones_like(two_layer_params(4, 3, 3));
  CHECK_THROWS_AS((void)apply_mask(ps, wrong), DimensionError);
}

TEST_CASE("cosine drop-fraction decay") {
  SparsitySchedule sched;
  sched.drop_fraction = 0.3;
  sched.decay = DropDecay::Cosine;
  CHECK(drop_fraction_at(sched, 0, 100) == doctest::Approx(0.3));
  double prev = 1.0;
  for (std::size_t t = 0; t <= 100; t += 5) {
    const double p = drop_fraction_at(sched, t, 100);
    CHECK(p <= prev + 1e-15);
    prev = p;
  }
  CHECK(drop_fraction_at(sched, 100, 100) == doctest::Approx(0.0));

  sched.decay = DropDecay::Constant;
  CHECK(drop_fraction_at(sched, 57, 100) == 0.3);
}
