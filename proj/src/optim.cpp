#include "sparseopt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparseopt {

std::optional<double> estimate_c_hat(const std::vector<double>& probe_losses_new,
                                     const std::vector<double>& probe_losses_anchor) {
  const std::size_t n = probe_losses_new.size();
  if (n != probe_losses_anchor.size())
    throw std::invalid_argument("estimate_c_hat: length mismatch");
  if (n < 2) throw std::invalid_argument("estimate_c_hat: need at least 2 probes");

  double mean_new = 0.0, mean_anchor = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_new += probe_losses_new[i];
    mean_anchor += probe_losses_anchor[i];
  }
  mean_new /= static_cast<double>(n);
  mean_anchor /= static_cast<double>(n);

  double cov = 0.0, var_anchor = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = probe_losses_new[i] - mean_new;
    const double db = probe_losses_anchor[i] - mean_anchor;
    cov += da * db;
    var_anchor += db * db;
  }
  cov /= static_cast<double>(n - 1);
  var_anchor /= static_cast<double>(n - 1);

  if (var_anchor < 1e-12) return std::nullopt;
  return std::clamp(cov / var_anchor, 0.0, 1.0);
}

ParamSet vr_combine(const ParamSet& g_new, const ParamSet& g_old,
                    const ParamSet& anchor_full_grad, double w) {
  ParamSet out = g_new;
  ps_add_scaled(out, g_old, -w);
  ps_add_scaled(out, anchor_full_grad, w);
  return out;
}

void agent_snapshot(AgentState& state, const AgentOptions& opts, const ModelSpec& spec,
                    const ParamSet& params, const Mask& mask, const Dataset& grad_data,
                    const Batch& probe, std::size_t epoch_index) {
  if (probe.size() == 0) throw std::invalid_argument("agent_snapshot: empty probe set");

  const Tensor new_losses = per_example_losses(spec, params, probe);
  if (epoch_index == 0) {
    state.c_smoothed = 0.0;
    state.last_c_hat = std::nullopt;
  } else if (!opts.fixed_c) {
    const auto c_hat = estimate_c_hat(new_losses.vec(), state.probe_losses_anchor);
    if (c_hat)
      state.c_smoothed = (1.0 - opts.alpha) * state.c_smoothed + opts.alpha * *c_hat;
    state.last_c_hat = c_hat;
  } else {
    state.last_c_hat = std::nullopt;
  }
  if (opts.fixed_c) state.c_smoothed = *opts.fixed_c;

  state.anchor = params;
  state.anchor_mask = mask;
  state.anchor_full_grad = full_gradient(spec, params, grad_data);
  state.probe_losses_anchor = new_losses.vec();
  state.has_anchor = true;
}

void svrg_snapshot(SvrgState& state, const ModelSpec& spec, const ParamSet& params,
                   const Mask& mask, const Dataset& grad_data) {
  state.anchor = params;
  state.anchor_mask = mask;
  state.anchor_full_grad = full_gradient(spec, params, grad_data);
  state.has_anchor = true;
}

ParamSet corrected_gradient(const AgentState& state, const AgentOptions& opts,
                            const ModelSpec& spec, const ParamSet& params,
                            const Batch& batch) {
  if (!state.has_anchor)
    throw std::logic_error("corrected_gradient: snapshot has not run");
  const double w = opts.gamma * state.effective_c(opts);
  ParamSet g_new = loss_and_grad(spec, params, batch).grad;
  if (w == 0.0) return g_new;
  const ParamSet g_old = loss_and_grad(spec, state.anchor, batch).grad;
  return vr_combine(g_new, g_old, state.anchor_full_grad, w);
}

ParamSet svrg_gradient(const SvrgState& state, const ModelSpec& spec,
                       const ParamSet& params, const Batch& batch) {
  if (!state.has_anchor) throw std::logic_error("svrg_gradient: snapshot has not run");
  const ParamSet g_new = loss_and_grad(spec, params, batch).grad;
  const ParamSet g_old = loss_and_grad(spec, state.anchor, batch).grad;
  return vr_combine(g_new, g_old, state.anchor_full_grad, 1.0);
}

ParamSet mvr_combine(MvrState& state, const MvrOptions& opts, const ParamSet& params,
                     const ParamSet& fresh, const ObjectiveGradFn& grad_at) {
  if (opts.mixing <= 0.0 || opts.mixing > 1.0)
    throw std::invalid_argument("mvr: mixing must be in (0,1]");
  if (!state.has_prev || opts.mixing == 1.0) {
    state.d = fresh;
  } else {
    const ParamSet g_prev = grad_at(state.prev_params);
    ParamSet d_new = fresh;
    ps_add_scaled(d_new, state.d, 1.0 - opts.mixing);
    ps_add_scaled(d_new, g_prev, -(1.0 - opts.mixing));
    state.d = std::move(d_new);
  }
  state.prev_params = params;
  state.has_prev = true;
  return state.d;
}

ParamSet mvr_gradient(MvrState& state, const MvrOptions& opts, const ModelSpec& spec,
                      const ParamSet& params, const Batch& batch) {
  ParamSet fresh = loss_and_grad(spec, params, batch).grad;
  return mvr_combine(state, opts, params, std::move(fresh),
                     [&](const ParamSet& p) { return loss_and_grad(spec, p, batch).grad; });
}

void mask_in_place(ParamSet& ps, const Mask& mask) {
  if (!ps.same_layout(mask.tensors))
    throw DimensionError("mask_in_place: layout mismatch");
  auto it = mask.tensors.begin();
  for (auto& [name, t] : ps) {
    const Tensor& mt = it->second;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= mt[i];
    ++it;
  }
}

namespace {

void check_step_inputs(const ParamSet& grad, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("step: lr must be positive");
  if (!grad.all_finite()) throw NonFiniteError("step: non-finite gradient");
}

void decoupled_weight_decay(ParamSet& params, double lr, double wd) {
  if (wd != 0.0) ps_scale(params, 1.0 - lr * wd);
}

}  // namespace

void sgd_momentum_step(ParamSet& params, SgdMomentumState& state,
                       const SgdMomentumOptions& opts, const Mask& mask,
                       const ParamSet& grad, double lr) {
  check_step_inputs(grad, lr);
  if (state.velocity.count() == 0) state.velocity = zeros_like(params);

  decoupled_weight_decay(params, lr, opts.weight_decay);
  auto vit = state.velocity.begin();
  auto git = grad.begin();
  for (auto& [name, p] : params) {
    Tensor& v = vit->second;
    const Tensor& g = git->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = opts.momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
    ++vit;
    ++git;
  }
  mask_in_place(params, mask);
  mask_in_place(state.velocity, mask);
}

void adam_step(ParamSet& params, AdamState& state, const AdamOptions& opts,
               const Mask& mask, const ParamSet& grad, double lr) {
  check_step_inputs(grad, lr);
  if (state.m.count() == 0) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }
  state.steps += 1;
  const auto t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(opts.beta1, t);
  const double bc2 = 1.0 - std::pow(opts.beta2, t);

  decoupled_weight_decay(params, lr, opts.weight_decay);
  auto mit = state.m.begin();
  auto vit = state.v.begin();
  auto git = grad.begin();
  for (auto& [name, p] : params) {
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    const Tensor& g = git->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + opts.epsilon);
    }
    ++mit;
    ++vit;
    ++git;
  }
  mask_in_place(params, mask);
  mask_in_place(state.m, mask);
  mask_in_place(state.v, mask);
}

void gradient_step(ParamSet& params, const Mask& mask, const ParamSet& grad, double lr) {
  check_step_inputs(grad, lr);
  ps_add_scaled(params, grad, -lr);
  mask_in_place(params, mask);
}

}  // namespace sparseopt
