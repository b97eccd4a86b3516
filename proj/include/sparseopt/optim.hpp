#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sparseopt/model.hpp"
#include "sparseopt/sparsity.hpp"

namespace sparseopt {

/// Batch gradient of the step objective as a function of the parameters.
/// Implementations freeze everything else (examples, perturbations), so
/// evaluating at the anchor pairs the exact same examples.
using ObjectiveGradFn = std::function<ParamSet(const ParamSet&)>;

/// Loss-based estimate of the gradient weight: sample covariance of the
/// probe losses at the new parameters with those at the anchor, divided by
/// the sample variance at the anchor, clamped to [0,1]. Returns nullopt
/// when the anchor variance is below 1e-12; the caller keeps its previous
/// smoothed value in that case.
std::optional<double> estimate_c_hat(const std::vector<double>& probe_losses_new,
                                     const std::vector<double>& probe_losses_anchor);

/// g_new - w*g_old + w*g_anchor_full, in that order. The SVRG path calls
/// this with w == 1 so the two estimators agree bitwise there.
ParamSet vr_combine(const ParamSet& g_new, const ParamSet& g_old,
                    const ParamSet& anchor_full_grad, double w);

struct AgentOptions {
  double gamma = 0.1;             // scaling applied to the smoothed weight
  double alpha = 0.5;             // EMA factor for c across epochs
  std::optional<double> fixed_c;  // ablation: freeze c_t and skip estimation
};

struct AgentState {
  ParamSet anchor;            // parameters at the latest snapshot, masked
  Mask anchor_mask;           // mask active when the snapshot was taken
  ParamSet anchor_full_grad;  // exact mean gradient at the anchor
  double c_smoothed = 0.0;
  std::optional<double> last_c_hat;  // estimate produced at the last snapshot
  std::vector<double> probe_losses_anchor;
  std::size_t epoch_length = 0;  // minibatch steps between snapshots
  bool has_anchor = false;

  double effective_c(const AgentOptions& opts) const {
    return opts.fixed_c ? *opts.fixed_c : c_smoothed;
  }
};

struct SvrgState {
  ParamSet anchor;
  Mask anchor_mask;
  ParamSet anchor_full_grad;
  bool has_anchor = false;
};

/// Epoch-boundary snapshot: re-anchor, recompute the stored full gradient
/// over grad_data, and update the smoothed weight from the probe losses.
/// Epoch 0 leaves c at 0; later epochs blend in the covariance estimate.
void agent_snapshot(AgentState& state, const AgentOptions& opts, const ModelSpec& spec,
                    const ParamSet& params, const Mask& mask, const Dataset& grad_data,
                    const Batch& probe, std::size_t epoch_index);

void svrg_snapshot(SvrgState& state, const ModelSpec& spec, const ParamSet& params,
                   const Mask& mask, const Dataset& grad_data);

/// Adaptive corrected batch gradient (clean objective):
/// g_new - gamma*c*g_old + gamma*c*g_anchor_full, with g_old evaluated at
/// the anchor on the same examples. gamma*c == 0 short-circuits to the
/// plain batch gradient.
ParamSet corrected_gradient(const AgentState& state, const AgentOptions& opts,
                            const ModelSpec& spec, const ParamSet& params,
                            const Batch& batch);

/// Same combination with the weight pinned to 1.
ParamSet svrg_gradient(const SvrgState& state, const ModelSpec& spec,
                       const ParamSet& params, const Batch& batch);

struct MvrOptions {
  double mixing = 0.1;  // a in (0,1]; a == 1 forgets all history
};

struct MvrState {
  ParamSet d;            // running corrected gradient
  ParamSet prev_params;  // parameters before the previous step
  bool has_prev = false;
};

/// Momentum-style variance-reduced recursion:
///   d_t = fresh + (1-a) * (d_{t-1} - grad_at(prev_params)),
/// with both gradients on the same batch; the first call sets d_0 = fresh.
/// `fresh` is the plain batch gradient for MVR, or the adaptive corrected
/// gradient when composing the two estimators.
ParamSet mvr_combine(MvrState& state, const MvrOptions& opts, const ParamSet& params,
                     const ParamSet& fresh, const ObjectiveGradFn& grad_at);

/// Plain MVR on the clean objective.
ParamSet mvr_gradient(MvrState& state, const MvrOptions& opts, const ModelSpec& spec,
                      const ParamSet& params, const Batch& batch);

// ---- step rules ----
// Every step applies the mask afterwards so pruned weights stay exactly 0;
// momentum/moment buffers are masked the same way. Throws NonFiniteError on
// a non-finite gradient.

struct SgdMomentumOptions {
  double momentum = 0.9;
  double weight_decay = 0.0;  // decoupled; applied as params *= (1 - lr*wd)
};

struct SgdMomentumState {
  ParamSet velocity;
};

void sgd_momentum_step(ParamSet& params, SgdMomentumState& state,
                       const SgdMomentumOptions& opts, const Mask& mask,
                       const ParamSet& grad, double lr);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  std::uint64_t steps = 0;
};

void adam_step(ParamSet& params, AdamState& state, const AdamOptions& opts,
               const Mask& mask, const ParamSet& grad, double lr);

/// theta -= lr * grad, masked. Used by the MVR variants, where the
/// recursion itself carries the momentum.
void gradient_step(ParamSet& params, const Mask& mask, const ParamSet& grad, double lr);

void mask_in_place(ParamSet& ps, const Mask& mask);

}  // namespace sparseopt
