#include "sparseopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sparseopt {

void ModelSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("model: needs at least one layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in_dim == 0 || layers[i].out_dim == 0)
      throw std::invalid_argument("model: layer dims must be positive");
    if (i > 0 && layers[i].in_dim != layers[i - 1].out_dim)
      throw std::invalid_argument("model: consecutive layer dims do not chain");
  }
}

ModelSpec ModelSpec::mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t classes) {
  ModelSpec spec;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    spec.layers.push_back({in, h, Activation::Relu});
    in = h;
  }
  spec.layers.push_back({in, classes, Activation::Identity});
  spec.validate();
  return spec;
}

void ParamSet::add(std::string name, Tensor t) {
  if (has(name)) throw std::invalid_argument("paramset: duplicate name " + name);
  entries_.emplace_back(std::move(name), std::move(t));
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return true;
  return false;
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("paramset: no tensor named " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("paramset: no tensor named " + name);
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& [name, t] : entries_)
    flat.insert(flat.end(), t.vec().begin(), t.vec().end());
  return flat;
}

ParamSet ParamSet::unflatten(const std::vector<double>& flat) const {
  if (flat.size() != total_size())
    throw DimensionError("paramset: flat vector length does not match layout");
  ParamSet out;
  std::size_t off = 0;
  for (const auto& [name, t] : entries_) {
    std::vector<double> chunk(flat.begin() + off, flat.begin() + off + t.size());
    out.add(name, Tensor(t.shape(), std::move(chunk)));
    off += t.size();
  }
  return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape() != other.entries_[i].second.shape()) return false;
  }
  return true;
}

bool ParamSet::all_finite() const {
  for (const auto& [name, t] : entries_)
    if (!t.all_finite()) return false;
  return true;
}

bool is_weight_name(const std::string& name) {
  static const std::string suffix = ".weight";
  return name.size() >= suffix.size() &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

ParamSet zeros_like(const ParamSet& like) {
  ParamSet out;
  for (const auto& [name, t] : like) out.add(name, Tensor(t.shape()));
  return out;
}

void ps_add_scaled(ParamSet& dst, const ParamSet& src, double c) {
  if (!dst.same_layout(src)) throw DimensionError("paramset: layout mismatch");
  auto it = src.begin();
  for (auto& [name, t] : dst) {
    add_scaled(t, it->second, c);
    ++it;
  }
}

void ps_scale(ParamSet& dst, double c) {
  for (auto& [name, t] : dst)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= c;
}

double ps_l2_norm(const ParamSet& ps) {
  double acc = 0.0;
  for (const auto& [name, t] : ps) acc += dot(t, t);
  return std::sqrt(acc);
}

bool ps_equal(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b)) return false;
  auto it = b.begin();
  for (const auto& [name, t] : a) {
    if (t.vec() != it->second.vec()) return false;
    ++it;
  }
  return true;
}

ParamSet init_params(const ModelSpec& spec, RngStream& rng) {
  spec.validate();
  ParamSet params;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    const double stddev = std::sqrt(2.0 / static_cast<double>(layer.in_dim));
    params.add("layer" + std::to_string(l) + ".weight",
               rng.gaussian({layer.in_dim, layer.out_dim}, 0.0, stddev));
    params.add("layer" + std::to_string(l) + ".bias", Tensor({layer.out_dim}));
  }
  return params;
}

namespace {

Tensor transpose2d(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor apply_activation(const Tensor& pre, Activation act) {
  if (act == Activation::Identity) return pre;
  Tensor out = pre;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return out;
}

// dpost -> dpre; relu' taken as 0 at exactly 0
Tensor activation_backward(const Tensor& dpost, const Tensor& pre, Activation act) {
  if (act == Activation::Identity) return dpost;
  Tensor out = dpost;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (pre[i] <= 0.0) out[i] = 0.0;
  return out;
}

Tensor onehot_softmax_dlogits(const Tensor& logits, const std::vector<std::size_t>& labels,
                              double inv_n) {
  Tensor d = softmax(logits);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    d.at(r, labels[r]) -= 1.0;
    for (std::size_t c = 0; c < d.cols(); ++c) d.at(r, c) *= inv_n;
  }
  return d;
}

}  // namespace

ForwardTrace forward(const ModelSpec& spec, const ParamSet& params, const Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.cols() != spec.input_dim())
    throw DimensionError("forward: inputs must be [n, input_dim]");
  ForwardTrace trace;
  trace.inputs = inputs;
  const Tensor* cur = &trace.inputs;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    const Tensor& w = params.at("layer" + std::to_string(l) + ".weight");
    const Tensor& b = params.at("layer" + std::to_string(l) + ".bias");
    Tensor pre = matmul(*cur, w);
    for (std::size_t r = 0; r < pre.rows(); ++r)
      for (std::size_t c = 0; c < pre.cols(); ++c) pre.at(r, c) += b[c];
    trace.pre.push_back(std::move(pre));
    trace.post.push_back(apply_activation(trace.pre.back(), layer.activation));
    cur = &trace.post.back();
  }
  return trace;
}

Tensor log_softmax(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double m = out.at(r, 0);
    for (std::size_t c = 1; c < out.cols(); ++c) m = std::max(m, out.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) z += std::exp(out.at(r, c) - m);
    const double log_z = std::log(z);
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) = out.at(r, c) - m - log_z;
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  Tensor out = log_softmax(logits);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return out;
}

Tensor per_example_losses(const ModelSpec& spec, const ParamSet& params, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("per_example_losses: empty batch");
  const ForwardTrace trace = forward(spec, params, batch.inputs);
  const Tensor ls = log_softmax(trace.logits());
  Tensor losses({batch.size()});
  for (std::size_t r = 0; r < batch.size(); ++r) losses[r] = -ls.at(r, batch.labels[r]);
  return losses;
}

ParamSet grad_from_dlogits(const ModelSpec& spec, const ParamSet& params,
                           const ForwardTrace& trace, const Tensor& dlogits) {
  ParamSet grads = zeros_like(params);
  Tensor delta = dlogits;
  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const auto& layer = spec.layers[li];
    const Tensor dpre = activation_backward(delta, trace.pre[li], layer.activation);
    const Tensor& below = li == 0 ? trace.inputs : trace.post[li - 1];
    grads.at("layer" + std::to_string(li) + ".weight") = matmul(transpose2d(below), dpre);
    Tensor& db = grads.at("layer" + std::to_string(li) + ".bias");
    for (std::size_t r = 0; r < dpre.rows(); ++r)
      for (std::size_t c = 0; c < dpre.cols(); ++c) db[c] += dpre.at(r, c);
    if (li > 0) {
      const Tensor& w = params.at("layer" + std::to_string(li) + ".weight");
      delta = matmul(dpre, transpose2d(w));
    }
  }
  return grads;
}

Tensor input_grad_from_dlogits(const ModelSpec& spec, const ParamSet& params,
                               const ForwardTrace& trace, const Tensor& dlogits) {
  Tensor delta = dlogits;
  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const auto& layer = spec.layers[li];
    const Tensor dpre = activation_backward(delta, trace.pre[li], layer.activation);
    const Tensor& w = params.at("layer" + std::to_string(li) + ".weight");
    delta = matmul(dpre, transpose2d(w));
  }
  return delta;
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamSet& params, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  const ForwardTrace trace = forward(spec, params, batch.inputs);
  const Tensor ls = log_softmax(trace.logits());
  double loss = 0.0;
  for (std::size_t r = 0; r < batch.size(); ++r) loss -= ls.at(r, batch.labels[r]);
  loss /= static_cast<double>(batch.size());

  const Tensor dlogits = onehot_softmax_dlogits(
      trace.logits(), batch.labels, 1.0 / static_cast<double>(batch.size()));
  return {loss, grad_from_dlogits(spec, params, trace, dlogits)};
}

ParamSet full_gradient(const ModelSpec& spec, const ParamSet& params, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("full_gradient: empty dataset");
  constexpr std::size_t kChunk = 512;
  ParamSet acc = zeros_like(params);
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(start + kChunk, data.size());
    ids.resize(end - start);
    for (std::size_t i = start; i < end; ++i) ids[i - start] = i;
    const LossGrad lg = loss_and_grad(spec, params, take_batch(data, ids));
    ps_add_scaled(acc, lg.grad, static_cast<double>(end - start));
  }
  ps_scale(acc, 1.0 / static_cast<double>(data.size()));
  return acc;
}

double accuracy(const ModelSpec& spec, const ParamSet& params, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(start + kChunk, data.size());
    ids.resize(end - start);
    for (std::size_t i = start; i < end; ++i) ids[i - start] = i;
    const Batch b = take_batch(data, ids);
    const ForwardTrace trace = forward(spec, params, b.inputs);
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
