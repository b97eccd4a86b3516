#pragma once

#include <cstddef>
#include <string>

#include "sparseopt/model.hpp"
#include "sparseopt/rng.hpp"

namespace sparseopt {

/// Binary mask parallel to a ParamSet: 0 = pruned, 1 = active. Only
/// ".weight" tensors are ever sparsified; bias tensors stay all-ones.
struct Mask {
  ParamSet tensors;

  static Mask ones_like(const ParamSet& params);
  /// 1 - nnz/total over weight tensors.
  double weight_sparsity() const;
  std::size_t weight_nnz() const;
};

enum class MaskDistribution { Uniform, Erk };
enum class MaskRule { Set, Rigl };
enum class DropDecay { Constant, Cosine };

struct SparsitySchedule {
  double target_sparsity = 0.0;  // s in [0,1)
  MaskDistribution distribution = MaskDistribution::Uniform;
  MaskRule rule = MaskRule::Set;
  std::size_t update_interval = 1;  // epochs between prune/grow updates
  double drop_fraction = 0.3;       // p0
  DropDecay decay = DropDecay::Cosine;
};

/// Random mask at the schedule's target sparsity. Uniform puts density
/// 1-s in every weight tensor; ERK allocates density proportional to
/// (fan_in+fan_out)/(fan_in*fan_out), scaled so the global density is 1-s
/// and capped at 1 per tensor.
Mask init_mask(const ParamSet& params, const SparsitySchedule& schedule, RngStream& rng);

/// Elementwise product; pruned coordinates come out exactly 0.
ParamSet apply_mask(const ParamSet& params, const Mask& mask);

/// SET prune/grow. Per weight tensor: drop the floor(p*nnz) active weights
/// of smallest |w| (ties to the lowest index), then activate the same count
/// uniformly at random among the positions left inactive. Grown weights are
/// zeroed in `params`; nnz is preserved exactly.
Mask set_update(ParamSet& params, const Mask& mask, double drop_fraction, RngStream& rng);

/// RigL prune/grow: prune as SET, grow at the inactive positions with the
/// largest |dense_grad| (ties to the lowest index). dense_grad must be the
/// unmasked gradient.
Mask rigl_update(ParamSet& params, const Mask& mask, const ParamSet& dense_grad,
                 double drop_fraction, RngStream& rng);

/// Drop fraction at epoch t: constant p0, or cosine decay
/// p0/2 * (1 + cos(pi * t / total_epochs)).
double drop_fraction_at(const SparsitySchedule& schedule, std::size_t epoch,
                        std::size_t total_epochs);

}  // namespace sparseopt
