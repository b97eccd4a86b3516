#include "sparseopt/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace sparseopt {

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (iterations > 0 && step_size <= 0.0)
    throw std::invalid_argument("attack: step_size must be > 0 when iterating");
  if (restarts < 1) throw std::invalid_argument("attack: restarts must be >= 1");
}

namespace {

// per-example losses [n] and input gradients [n,d] of an ascent objective
using PerExampleEval = std::function<std::pair<Tensor, Tensor>(const Tensor&)>;

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_unit_box(const Tensor& inputs) {
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (inputs[i] < -1e-12 || inputs[i] > 1.0 + 1e-12)
      throw std::invalid_argument("attack: inputs must lie in [0,1]");
}

Tensor pgd_core(const Tensor& inputs, const AttackConfig& cfg, RngStream& rng,
                const PerExampleEval& eval) {
  cfg.validate();
  check_unit_box(inputs);
  if (cfg.epsilon == 0.0) return inputs;

  const std::size_t n = inputs.rows(), d = inputs.cols();
  Tensor best = inputs;
  std::vector<double> best_loss(n, -std::numeric_limits<double>::infinity());

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    Tensor x = inputs;
    if (cfg.random_start) {
      const Tensor delta = rng.uniform({n, d}, -cfg.epsilon, cfg.epsilon);
      for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = std::clamp(x[i] + delta[i], 0.0, 1.0);
    }
    for (std::size_t it = 0;; ++it) {
      const auto [losses, dx] = eval(x);
      for (std::size_t r = 0; r < n; ++r) {
        if (losses[r] > best_loss[r]) {
          best_loss[r] = losses[r];
          for (std::size_t c = 0; c < d; ++c) best.at(r, c) = x.at(r, c);
        }
      }
      if (it == cfg.iterations) break;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          double v = x.at(r, c) + cfg.step_size * sign(dx.at(r, c));
          v = std::clamp(v, inputs.at(r, c) - cfg.epsilon, inputs.at(r, c) + cfg.epsilon);
          x.at(r, c) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return best;
}

// cross-entropy ascent pieces: unscaled per-example dlogits
PerExampleEval make_ce_eval(const ModelSpec& spec, const ParamSet& params,
                            const std::vector<std::size_t>& labels) {
  return [&spec, &params, &labels](const Tensor& x) {
    const ForwardTrace trace = forward(spec, params, x);
    const Tensor ls = log_softmax(trace.logits());
    Tensor losses({x.rows()});
    for (std::size_t r = 0; r < x.rows(); ++r) losses[r] = -ls.at(r, labels[r]);
    Tensor dlogits = softmax(trace.logits());
    for (std::size_t r = 0; r < x.rows(); ++r) dlogits.at(r, labels[r]) -= 1.0;
    return std::make_pair(std::move(losses),
                          input_grad_from_dlogits(spec, params, trace, dlogits));
  };
}

// KL(p_clean || q(x)) ascent pieces; p_clean is frozen
PerExampleEval make_kl_eval(const ModelSpec& spec, const ParamSet& params,
                            const Tensor& p_clean, const Tensor& lp_clean) {
  return [&spec, &params, &p_clean, &lp_clean](const Tensor& x) {
    const ForwardTrace trace = forward(spec, params, x);
    const Tensor lq = log_softmax(trace.logits());
    const std::size_t n = x.rows(), classes = lq.cols();
    Tensor losses({n});
    Tensor dlogits({n, classes});
    for (std::size_t r = 0; r < n; ++r) {
      double kl = 0.0;
      for (std::size_t c = 0; c < classes; ++c)
        kl += p_clean.at(r, c) * (lp_clean.at(r, c) - lq.at(r, c));
      losses[r] = kl;
      for (std::size_t c = 0; c < classes; ++c)
        dlogits.at(r, c) = std::exp(lq.at(r, c)) - p_clean.at(r, c);
    }
    return std::make_pair(std::move(losses),
                          input_grad_from_dlogits(spec, params, trace, dlogits));
  };
}

}  // namespace

Tensor pgd_attack(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                  const Batch& batch, const AttackConfig& cfg, RngStream& rng) {
  const ParamSet mp = apply_mask(params, mask);
  return pgd_core(batch.inputs, cfg, rng, make_ce_eval(spec, mp, batch.labels));
}

Tensor trades_attack(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                     const Batch& batch, const AttackConfig& cfg, RngStream& rng) {
  const ParamSet mp = apply_mask(params, mask);
  const ForwardTrace trace = forward(spec, mp, batch.inputs);
  const Tensor lp = log_softmax(trace.logits());
  Tensor p = lp;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(p[i]);
  return pgd_core(batch.inputs, cfg, rng, make_kl_eval(spec, mp, p, lp));
}

LossGrad at_loss_and_grad(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                          const Batch& batch, const AttackConfig& cfg, RngStream& rng) {
  const ParamSet mp = apply_mask(params, mask);
  Batch adv = batch;
  adv.inputs = pgd_core(batch.inputs, cfg, rng, make_ce_eval(spec, mp, batch.labels));
  return loss_and_grad(spec, mp, adv);
}

LossGrad trades_loss_and_grad(const ModelSpec& spec, const ParamSet& params,
                              const Mask& mask, const Batch& batch,
                              const AttackConfig& cfg, double beta, RngStream& rng) {
  if (beta < 0.0) throw std::invalid_argument("trades: beta must be >= 0");
  const ParamSet mp = apply_mask(params, mask);
  if (beta == 0.0) return loss_and_grad(spec, mp, batch);
  const Tensor x_adv = trades_attack(spec, params, mask, batch, cfg, rng);
  return trades_objective(spec, mp, batch, x_adv, beta);
}

LossGrad trades_objective(const ModelSpec& spec, const ParamSet& params,
                          const Batch& batch, const Tensor& x_adv, double beta) {
  if (beta == 0.0) return loss_and_grad(spec, params, batch);
  const std::size_t n = batch.size(), classes = spec.classes();
  const double inv_n = 1.0 / static_cast<double>(n);

  const ForwardTrace trace_clean = forward(spec, params, batch.inputs);
  const Tensor lp = log_softmax(trace_clean.logits());
  const ForwardTrace trace_adv = forward(spec, params, x_adv);
  const Tensor lq = log_softmax(trace_adv.logits());

  double ce = 0.0;
  for (std::size_t r = 0; r < n; ++r) ce -= lp.at(r, batch.labels[r]);
  ce *= inv_n;

  std::vector<double> kl(n, 0.0);
  double kl_mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < classes; ++c)
      kl[r] += std::exp(lp.at(r, c)) * (lp.at(r, c) - lq.at(r, c));
    kl_mean += kl[r];
  }
  kl_mean *= inv_n;

  // d/dz_clean of CE/n + beta/n * KL(p||q): softmax-minus-onehot plus
  // beta * p .* (log p - log q - KL); d/dz_adv is beta * (q - p).
  Tensor dl_clean({n, classes});
  Tensor dl_adv({n, classes});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double pc = std::exp(lp.at(r, c));
      const double qc = std::exp(lq.at(r, c));
      const double resid = lp.at(r, c) - lq.at(r, c);
      double g = pc;
      if (c == batch.labels[r]) g -= 1.0;
      g += beta * pc * (resid - kl[r]);
      dl_clean.at(r, c) = g * inv_n;
      dl_adv.at(r, c) = beta * (qc - pc) * inv_n;
    }
  }

  ParamSet grad = grad_from_dlogits(spec, params, trace_clean, dl_clean);
  ps_add_scaled(grad, grad_from_dlogits(spec, params, trace_adv, dl_adv), 1.0);
  return {ce + beta * kl_mean, std::move(grad)};
}

double robust_accuracy(const ModelSpec& spec, const ParamSet& params, const Mask& mask,
                       const Dataset& data, const AttackConfig& cfg, RngStream rng) {
  if (data.size() == 0) throw std::invalid_argument("robust_accuracy: empty dataset");
  const ParamSet mp = apply_mask(params, mask);
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  std::vector<std::size_t> ids;
  std::size_t chunk_index = 0;
  for (std::size_t start = 0; start < data.size(); start += kChunk, ++chunk_index) {
    const std::size_t end = std::min(start + kChunk, data.size());
    ids.resize(end - start);
    for (std::size_t i = start; i < end; ++i) ids[i - start] = i;
    const Batch b = take_batch(data, ids);
    RngStream chunk_rng = rng.substream(chunk_index);
    const Tensor x_adv =
        pgd_core(b.inputs, cfg, chunk_rng, make_ce_eval(spec, mp, b.labels));
    const ForwardTrace trace = forward(spec, mp, x_adv);
    const Tensor& logits = trace.logits();
    for (std::size_t r = 0; r < b.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      if (best == b.labels[r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace sparseopt
