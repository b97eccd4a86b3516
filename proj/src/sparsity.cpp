#include "sparseopt/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace sparseopt {

Mask Mask::ones_like(const ParamSet& params) {
  Mask m;
  for (const auto& [name, t] : params) m.tensors.add(name, Tensor::full(t.shape(), 1.0));
  return m;
}

std::size_t Mask::weight_nnz() const {
  std::size_t nnz = 0;
  for (const auto& [name, t] : tensors) {
    if (!is_weight_name(name)) continue;
    for (std::size_t i = 0; i < t.size(); ++i) nnz += t[i] != 0.0 ? 1 : 0;
  }
  return nnz;
}

double Mask::weight_sparsity() const {
  std::size_t total = 0;
  for (const auto& [name, t] : tensors)
    if (is_weight_name(name)) total += t.size();
  if (total == 0) return 0.0;
  return 1.0 - static_cast<double>(weight_nnz()) / static_cast<double>(total);
}

namespace {

struct WeightTensorInfo {
  std::string name;
  std::size_t numel = 0;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

std::vector<WeightTensorInfo> weight_tensor_infos(const ParamSet& params) {
  std::vector<WeightTensorInfo> infos;
  for (const auto& [name, t] : params) {
    if (!is_weight_name(name)) continue;
    if (t.rank() != 2) throw DimensionError("mask: weight tensors must be rank 2");
    infos.push_back({name, t.size(), t.shape()[0], t.shape()[1]});
  }
  return infos;
}

// Layer densities for the ERK distribution: proportional to
// (fan_in+fan_out)/(fan_in*fan_out), scaled to hit the global density,
// iteratively capping any layer that would exceed density 1.
std::vector<double> erk_densities(const std::vector<WeightTensorInfo>& infos,
                                  double global_density) {
  const std::size_t n = infos.size();
  std::vector<double> raw(n), density(n, 1.0);
  std::vector<bool> capped(n, false);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = static_cast<double>(infos[i].fan_in + infos[i].fan_out) /
             static_cast<double>(infos[i].fan_in * infos[i].fan_out);
    total += static_cast<double>(infos[i].numel);
  }
  double target_nnz = global_density * total;
  for (;;) {
    double capped_nnz = 0.0, free_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (capped[i])
        capped_nnz += static_cast<double>(infos[i].numel);
      else
        free_mass += raw[i] * static_cast<double>(infos[i].numel);
    }
    if (free_mass <= 0.0) break;
    const double eps = (target_nnz - capped_nnz) / free_mass;
    bool newly_capped = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!capped[i] && eps * raw[i] >= 1.0) {
        capped[i] = true;
        newly_capped = true;
      }
    }
    if (!newly_capped) {
      for (std::size_t i = 0; i < n; ++i)
        if (!capped[i]) density[i] = eps * raw[i];
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (capped[i]) density[i] = 1.0;
  return density;
}

std::vector<std::size_t> active_indices(const Tensor& mask_t) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask_t.size(); ++i)
    if (mask_t[i] != 0.0) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> inactive_indices(const Tensor& mask_t) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask_t.size(); ++i)
    if (mask_t[i] == 0.0) idx.push_back(i);
  return idx;
}

// k active positions of smallest |w|, ties to the lowest index.
std::vector<std::size_t> smallest_magnitude(const Tensor& weights,
                                            const std::vector<std::size_t>& active,
                                            std::size_t k) {
  std::vector<std::size_t> order = active;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(weights[a]) < std::abs(weights[b]);
  });
  order.resize(k);
  return order;
}

}  // namespace

Mask init_mask(const ParamSet& params, const SparsitySchedule& schedule, RngStream& rng) {
  if (schedule.target_sparsity < 0.0 || schedule.target_sparsity >= 1.0)
    throw std::invalid_argument("init_mask: sparsity must be in [0,1)");
  const double global_density = 1.0 - schedule.target_sparsity;

  const auto infos = weight_tensor_infos(params);
  std::vector<double> densities(infos.size(), global_density);
  if (schedule.distribution == MaskDistribution::Erk)
    densities = erk_densities(infos, global_density);

  Mask mask = Mask::ones_like(params);
  for (std::size_t i = 0; i < infos.size(); ++i) {
    Tensor& mt = mask.tensors.at(infos[i].name);
    const auto nnz = static_cast<std::size_t>(std::llround(
        std::min(1.0, densities[i]) * static_cast<double>(infos[i].numel)));
    std::fill(mt.vec().begin(), mt.vec().end(), 0.0);
    for (std::size_t j : rng.sample_without_replacement(infos[i].numel, nnz))
      mt[j] = 1.0;
  }
  return mask;
}

ParamSet apply_mask(const ParamSet& params, const Mask& mask) {
  if (!params.same_layout(mask.tensors))
    throw DimensionError("apply_mask: mask layout does not match params");
  ParamSet out = params;
  auto it = mask.tensors.begin();
  for (auto& [name, t] : out) {
    const Tensor& mt = it->second;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= mt[i];
    ++it;
  }
  return out;
}

namespace {

// Shared prune step; returns growth candidate positions (inactive after
// pruning, so a just-pruned slot can be regrown) and the grow count.
struct PruneResult {
  Tensor new_mask;
  std::vector<std::size_t> candidates;
  std::size_t grow_count = 0;
};

PruneResult prune_tensor(const Tensor& weights, const Tensor& mask_t, double p) {
  PruneResult res;
  res.new_mask = mask_t;
  const auto active = active_indices(mask_t);
  res.grow_count = static_cast<std::size_t>(
      std::floor(p * static_cast<double>(active.size())));
  if (res.grow_count > 0)
    for (std::size_t i : smallest_magnitude(weights, active, res.grow_count))
      res.new_mask[i] = 0.0;
  res.candidates = inactive_indices(res.new_mask);
  return res;
}

void grow_positions(Tensor& mask_t, Tensor& weights,
                    const std::vector<std::size_t>& chosen) {
  for (std::size_t i : chosen) {
    mask_t[i] = 1.0;
    weights[i] = 0.0;
  }
}

}  // namespace

Mask set_update(ParamSet& params, const Mask& mask, double drop_fraction, RngStream& rng) {
  if (drop_fraction <= 0.0 || drop_fraction >= 1.0)
    throw std::invalid_argument("set_update: drop fraction must be in (0,1)");
  Mask out = mask;
  for (auto& [name, mt] : out.tensors) {
    if (!is_weight_name(name)) continue;
    Tensor& w = params.at(name);
    PruneResult pr = prune_tensor(w, mt, drop_fraction);
    if (pr.grow_count == 0) continue;
    std::vector<std::size_t> chosen;
    for (std::size_t pick :
         rng.sample_without_replacement(pr.candidates.size(), pr.grow_count))
      chosen.push_back(pr.candidates[pick]);
    mt = pr.new_mask;
    grow_positions(mt, w, chosen);
  }
  return out;
}

Mask rigl_update(ParamSet& params, const Mask& mask, const ParamSet& dense_grad,
                 double drop_fraction, RngStream& rng) {
  (void)rng;  // growth is deterministic given the gradient
  if (drop_fraction <= 0.0 || drop_fraction >= 1.0)
    throw std::invalid_argument("rigl_update: drop fraction must be in (0,1)");
  if (!params.same_layout(dense_grad))
    throw DimensionError("rigl_update: gradient layout does not match params");
  Mask out = mask;
  for (auto& [name, mt] : out.tensors) {
    if (!is_weight_name(name)) continue;
    Tensor& w = params.at(name);
    const Tensor& g = dense_grad.at(name);
    PruneResult pr = prune_tensor(w, mt, drop_fraction);
    if (pr.grow_count == 0) continue;
    std::vector<std::size_t> order = pr.candidates;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(g[a]) > std::abs(g[b]);
    });
    order.resize(pr.grow_count);
    mt = pr.new_mask;
    grow_positions(mt, w, order);
  }
  return out;
}

double drop_fraction_at(const SparsitySchedule& schedule, std::size_t epoch,
                        std::size_t total_epochs) {
  if (schedule.decay == DropDecay::Constant) return schedule.drop_fraction;
  if (total_epochs == 0) return schedule.drop_fraction;
  const double t = std::min(static_cast<double>(epoch), static_cast<double>(total_epochs));
  return 0.5 * schedule.drop_fraction *
         (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(total_epochs)));
}

}  // namespace sparseopt
