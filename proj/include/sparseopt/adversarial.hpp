#pragma once

#include <cstddef>

#include "sparseopt/model.hpp"
#include "sparseopt/rng.hpp"
#include "sparseopt/sparsity.hpp"

namespace sparseopt {

struct AttackConfig {
  double epsilon = 8.0 / 255.0;     // L-inf radius in input units
  double step_size = 2.0 / 255.0;   // per-iteration sign step
  std::size_t iterations = 10;
  bool random_start = true;
  std::size_t restarts = 1;

  void validate() const;
};

/// Projected sign-gradient ascent on the cross-entropy loss. Every iterate
/// is projected back into the L-inf epsilon ball around the original input
/// and clamped to [0,1]. The returned tensor holds, per example, the
/// highest-loss candidate seen across all iterates and restarts; with
/// random_start=false the unperturbed input is the first candidate, so the
/// adversarial loss never drops below the clean loss.
Tensor pgd_attack(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                  const Batch& batch, const AttackConfig& cfg, RngStream& rng);

/// Cross-entropy loss/gradient on the PGD-perturbed batch (the min-max
/// objective). The attack is generated fresh from the supplied stream.
LossGrad at_loss_and_grad(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                          const Batch& batch, const AttackConfig& cfg, RngStream& rng);

/// Clean cross-entropy plus beta * mean KL(f(x) || f(x_adv)), with the
/// inner maximization run on the KL term. The gradient is exact in the
/// parameters with x_adv held fixed; it flows through both the clean and
/// the adversarial logits.
LossGrad trades_loss_and_grad(const ModelSpec& spec, const ParamSet& params,
                              const Mask& mask, const Batch& batch,
                              const AttackConfig& cfg, double beta, RngStream& rng);

/// TRADES inner maximization: per-example KL ascent from the clean
/// predictive distribution, same projection contract as pgd_attack.
Tensor trades_attack(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                     const Batch& batch, const AttackConfig& cfg, RngStream& rng);

/// TRADES loss/gradient with the adversarial examples already fixed, so the
/// same objective can be evaluated at the current parameters and at the
/// anchor on identical inputs.
LossGrad trades_objective(const ModelSpec& spec, const ParamSet& params,
                          const Batch& batch, const Tensor& x_adv, double beta);

/// Accuracy on attacked inputs, evaluated in deterministic chunks with one
/// substream per chunk.
double robust_accuracy(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                       const Dataset& data, const AttackConfig& cfg, RngStream rng);

}  // namespace sparseopt
