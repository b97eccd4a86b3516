#include <cmath>

#include "doctest.h"
#include "sparseopt/adversarial.hpp"

using namespace sparseopt;

namespace {

struct AdvSetup {
  ModelSpec spec;
  ParamSet params;
  Mask mask;
  Batch batch;
};

AdvSetup make_setup(std::uint64_t seed, std::size_t n = 6) {
  AdvSetup s;
  s.spec = ModelSpec::mlp(4, {5}, 3);
  RngStream rng(seed);
  s.params = init_params(s.spec, rng);
  s.mask = Mask::ones_like(s.params);
  s.batch.inputs = rng.uniform({n, 4}, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.batch.labels.push_back(rng.next_below(3));
    s.batch.sample_ids.push_back(i);
  }
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("pgd with zero radius returns the input exactly") {
  AdvSetup s = make_setup(1);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  cfg.iterations = 5;
  cfg.random_start = true;
  RngStream rng(2);
  const Tensor adv = pgd_attack(s.spec, s.params, s.mask, s.batch, cfg, rng);
  CHECK(adv.vec() == s.batch.inputs.vec());
}

TEST_CASE("pgd with zero iterations and no random start is the identity") {
  AdvSetup s = make_setup(3);
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.iterations = 0;
  cfg.random_start = false;
  RngStream rng(4);
  const Tensor adv = pgd_attack(s.spec, s.params, s.mask, s.batch, cfg, rng);
  CHECK(adv.vec() == s.batch.inputs.vec());
}

TEST_CASE("pgd obeys the ball and the box on random instances") {
  RngStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    AdvSetup s = make_setup(100 + trial, 3);
    AttackConfig cfg;
    cfg.epsilon = 0.01 + 0.2 * rng.next_double();
    cfg.step_size = cfg.epsilon / (1.0 + rng.next_below(4));
    cfg.iterations = rng.next_below(8);
    cfg.random_start = rng.next_below(2) == 1;
    cfg.restarts = 1 + rng.next_below(3);
    RngStream attack_rng = rng.substream(trial);
    const Tensor adv = pgd_attack(s.spec, s.params, s.mask, s.batch, cfg, attack_rng);
    CHECK(max_abs_diff(adv, s.batch.inputs) <= cfg.epsilon + 1e-12);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      CHECK(adv[i] >= 0.0);
      CHECK(adv[i] <= 1.0);
    }
  }
}

TEST_CASE("pgd is deterministic per stream") {
  AdvSetup s = make_setup(7);
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.step_size = 0.025;
  cfg.iterations = 6;
  cfg.random_start = true;
  cfg.restarts = 3;
  RngStream a(9), b(9);
  const Tensor adv_a = pgd_attack(s.spec, s.params, s.mask, s.batch, cfg, a);
  const Tensor adv_b = pgd_attack(s.spec, s.params, s.mask, s.batch, cfg, b);
  CHECK(adv_a.vec() == adv_b.vec());
}

TEST_CASE("adversarial loss dominates clean loss without random start") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL, 14ULL}) {
    AdvSetup s = make_setup(seed);
    AttackConfig cfg;
    cfg.epsilon = 0.08;
    cfg.step_size = 0.02;
    cfg.iterations = 10;
    cfg.random_start = false;
    RngStream rng(seed);
    const LossGrad adv = at_loss_and_grad(s.spec, s.params, s.mask, s.batch, cfg, rng);
    const LossGrad clean = loss_and_grad(s.spec, s.params, s.batch);
    CHECK(adv.loss >= clean.loss - 1e-12);
  }
}

TEST_CASE("at objective reduces to the clean objective at epsilon 0") {
  AdvSetup s = make_setup(15);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  RngStream rng(16);
  const LossGrad adv = at_loss_and_grad(s.spec, s.params, s.mask, s.batch, cfg, rng);
  const LossGrad clean = loss_and_grad(s.spec, s.params, s.batch);
  CHECK(adv.loss == clean.loss);
  CHECK(ps_equal(adv.grad, clean.grad));
}

TEST_CASE("at gradient matches finite differences with the attack frozen") {
  AdvSetup s = make_setup(17);
  AttackConfig cfg;
  cfg.epsilon = 0.06;
  cfg.step_size = 0.015;
  cfg.iterations = 5;
  cfg.random_start = true;
  RngStream rng(18);
  Batch adv = s.batch;
  adv.inputs = pgd_attack(s.spec, s.params, s.mask, s.batch, cfg, rng);

  const ParamSet grad = loss_and_grad(s.spec, s.params, adv).grad;
  RngStream pick(19);
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, t] : s.params)
    for (std::size_t i = 0; i < t.size(); ++i) coords.emplace_back(name, i);
  for (int k = 0; k < 20; ++k) {
    const auto& [name, idx] = coords[pick.next_below(coords.size())];
    ParamSet shifted = s.params;
    const double h = 1e-5;
    shifted.at(name)[idx] += h;
    const double up = loss_and_grad(s.spec, shifted, adv).loss;
    shifted.at(name)[idx] -= 2 * h;
    const double down = loss_and_grad(s.spec, shifted, adv).loss;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grad.at(name)[idx];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    CHECK(std::abs(analytic - numeric) / denom < 1e-4);
  }
}

TEST_CASE("trades degenerate cases") {
  AdvSetup s = make_setup(21);
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.step_size = 0.0125;
  cfg.iterations = 5;

  SUBCASE("epsilon 0 removes the kl term") {
    AttackConfig zero = cfg;
    zero.epsilon = 0.0;
    RngStream rng(22);
    const LossGrad t = trades_loss_and_grad(s.spec, s.params, s.mask, s.batch, zero, 6.0, rng);
    const LossGrad clean = loss_and_grad(s.spec, s.params, s.batch);
    CHECK(t.loss == doctest::Approx(clean.loss).epsilon(1e-14));
  }

  SUBCASE("beta 0 ignores the attack entirely") {
    RngStream rng(23);
    const LossGrad t = trades_loss_and_grad(s.spec, s.params, s.mask, s.batch, cfg, 0.0, rng);
    const LossGrad clean = loss_and_grad(s.spec, s.params, s.batch);
    CHECK(t.loss == clean.loss);
    CHECK(ps_equal(t.grad, clean.grad));
  }

  SUBCASE("kl term is nonnegative") {
    RngStream rng(24);
    const LossGrad t = trades_loss_and_grad(s.spec, s.params, s.mask, s.batch, cfg, 6.0, rng);
    const LossGrad clean = loss_and_grad(s.spec, s.params, s.batch);
    CHECK(t.loss >= clean.loss - 1e-12);  // beta * mean KL >= 0
  }
}

TEST_CASE("trades gradient matches finite differences with x_adv frozen") {
  AdvSetup s = make_setup(25);
  AttackConfig cfg;
  cfg.epsilon = 0.06;
  cfg.step_size = 0.015;
  cfg.iterations = 4;
  RngStream rng(26);
  const Tensor x_adv = trades_attack(s.spec, s.params, s.mask, s.batch, cfg, rng);
  const double beta = 4.0;

  const LossGrad t = trades_objective(s.spec, s.params, s.batch, x_adv, beta);
  RngStream pick(27);
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, tns] : s.params)
    for (std::size_t i = 0; i < tns.size(); ++i) coords.emplace_back(name, i);
  for (int k = 0; k < 20; ++k) {
    const auto& [name, idx] = coords[pick.next_below(coords.size())];
    ParamSet shifted = s.params;
    const double h = 1e-5;
    shifted.at(name)[idx] += h;
    const double up = trades_objective(s.spec, shifted, s.batch, x_adv, beta).loss;
    shifted.at(name)[idx] -= 2 * h;
    const double down = trades_objective(s.spec, shifted, s.batch, x_adv, beta).loss;
    const double numeric = (up - down) / (2 * h);
    const double analytic = t.grad.at(name)[idx];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    CHECK(std::abs(analytic - numeric) / denom < 1e-4);
  }
}

TEST_CASE("attack rejects inputs outside the unit box") {
  AdvSetup s = make_setup(29);
  s.batch.inputs.at(0, 0) = 1.5;
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  RngStream rng(30);
  CHECK_THROWS_AS((void)pgd_attack(s.spec, s.params, s.mask, s.batch, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("attack config validation") {
  AttackConfig cfg;
  cfg.epsilon = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.epsilon = 0.1;
  cfg.step_size = 0.0;
  cfg.iterations = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.step_size = 0.01;
  cfg.restarts = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
