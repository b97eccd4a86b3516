#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sparseopt/dataset.hpp"
#include "sparseopt/rng.hpp"
#include "sparseopt/tensor.hpp"

namespace sparseopt {

enum class Activation { Relu, Identity };

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::Identity;
};

/// Feed-forward net description; the last layer's outputs are logits for
/// softmax cross-entropy, so its out_dim is the class count.
struct ModelSpec {
  std::vector<LayerSpec> layers;

  std::size_t input_dim() const { return layers.front().in_dim; }
  std::size_t classes() const { return layers.back().out_dim; }
  void validate() const;  // dims chain, at least one layer

  static ModelSpec mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                       std::size_t classes);
};

/// Ordered map name -> Tensor. Keeps insertion order so flattening,
/// serialization, and elementwise arithmetic are all deterministic.
class ParamSet {
 public:
  void add(std::string name, Tensor t);
  bool has(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<double> flatten() const;
  /// Rebuild from a flat vector using this ParamSet's names/shapes.
  ParamSet unflatten(const std::vector<double>& flat) const;

  bool same_layout(const ParamSet& other) const;
  bool all_finite() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

bool is_weight_name(const std::string& name);

ParamSet zeros_like(const ParamSet& like);
void ps_add_scaled(ParamSet& dst, const ParamSet& src, double c);  // dst += c*src
void ps_scale(ParamSet& dst, double c);
double ps_l2_norm(const ParamSet& ps);
bool ps_equal(const ParamSet& a, const ParamSet& b);  // bitwise

/// Kaiming fan-in init: weights ~ N(0, 2/in_dim), biases zero.
ParamSet init_params(const ModelSpec& spec, RngStream& rng);

/// Per-layer activations cached by a forward pass, for backprop.
struct ForwardTrace {
  Tensor inputs;             // [n, d]
  std::vector<Tensor> pre;   // pre-activation per layer
  std::vector<Tensor> post;  // post-activation per layer
  const Tensor& logits() const { return post.back(); }
};

ForwardTrace forward(const ModelSpec& spec, const ParamSet& params, const Tensor& inputs);

/// Rowwise log-softmax with max subtraction.
Tensor log_softmax(const Tensor& logits);
Tensor softmax(const Tensor& logits);

/// Softmax cross-entropy of each example; mean equals the batch loss.
Tensor per_example_losses(const ModelSpec& spec, const ParamSet& params, const Batch& batch);

struct LossGrad {
  double loss = 0.0;
  ParamSet grad;
};

/// Mean loss over the batch and its exact gradient.
LossGrad loss_and_grad(const ModelSpec& spec, const ParamSet& params, const Batch& batch);

/// Backprop an arbitrary dL/dlogits to parameter space.
ParamSet grad_from_dlogits(const ModelSpec& spec, const ParamSet& params,
                           const ForwardTrace& trace, const Tensor& dlogits);

/// Backprop an arbitrary dL/dlogits to the inputs.
Tensor input_grad_from_dlogits(const ModelSpec& spec, const ParamSet& params,
                               const ForwardTrace& trace, const Tensor& dlogits);

/// Exact mean gradient over every sample in the dataset.
ParamSet full_gradient(const ModelSpec& spec, const ParamSet& params, const Dataset& data);

/// Fraction of argmax-correct predictions; argmax ties go to the lowest
/// class index.
double accuracy(const ModelSpec& spec, const ParamSet& params, const Dataset& data);

}  // namespace sparseopt
