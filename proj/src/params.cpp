#include "cddm/params.hpp"

#include <cmath>
#include <cstring>

#include "cddm/errors.hpp"

namespace cddm {

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  require(it != tensors_.end(), "unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  require(it != tensors_.end(), "unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

std::uint64_t ParamSet::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : tensors_) {
    feed(name.data(), name.size());
    for (std::size_t d : t.shape()) {
      const std::uint64_t d64 = d;
      feed(&d64, sizeof d64);
    }
    feed(t.data(), t.size() * sizeof(float));
  }
  return h;
}

bool ParamSet::same_structure(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
  }
  return true;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : tensors_) out.set(name, Tensor(t.shape()));
  return out;
}

ParamSet ParamSet::with_prefix_removed(const std::string& prefix) const {
  ParamSet out;
  for (const auto& [name, t] : tensors_) {
    if (name.rfind(prefix, 0) == 0) out.set(name.substr(prefix.size()), t);
  }
  return out;
}

void ParamSet::merge(const ParamSet& other, const std::string& prefix) {
  for (const auto& [name, t] : other) set(prefix + name, t);
}

VarMap::VarMap(const ParamSet& params, bool trainable) {
  for (const auto& [name, t] : params) vars_.emplace(name, trainable ? parameter(t) : constant(t));
}

const Var& VarMap::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  require(it != vars_.end(), "unknown parameter '" + name + "'");
  return it->second;
}

ValueAndGrad value_and_grad(const ParamSet& params, const std::function<Var(const VarMap&)>& loss_fn) {
  VarMap bound(params, true);
  Var loss = loss_fn(bound);
  require(loss.size() == 1, "loss must be scalar, got shape " + shape_string(loss.shape()));
  if (!std::isfinite(loss.value()[0])) throw NumericOverflow("loss", "non-finite loss value");
  backward(loss);
  ValueAndGrad out{loss.value()[0], {}};
  for (const auto& [name, var] : bound.vars()) {
    const Tensor& g = var.grad();
    out.grads.set(name, g.size() == var.size() ? g : Tensor(var.shape()));
  }
  return out;
}

ParamSet grad(const ParamSet& params, const std::function<Var(const VarMap&)>& loss_fn) {
  return value_and_grad(params, loss_fn).grads;
}

MultiValueAndGrad value_and_grad(const std::vector<const ParamSet*>& params,
                                 const std::function<Var(const std::vector<VarMap>&)>& loss_fn) {
  std::vector<VarMap> bound;
  bound.reserve(params.size());
  for (const ParamSet* p : params) bound.emplace_back(*p, true);
  Var loss = loss_fn(bound);
  require(loss.size() == 1, "loss must be scalar, got shape " + shape_string(loss.shape()));
  if (!std::isfinite(loss.value()[0])) throw NumericOverflow("loss", "non-finite loss value");
  backward(loss);
  MultiValueAndGrad out{loss.value()[0], {}};
  for (const auto& map : bound) {
    ParamSet g;
    for (const auto& [name, var] : map.vars()) g.set(name, var.grad().size() == var.size() ? var.grad() : Tensor(var.shape()));
    out.grads.push_back(std::move(g));
  }
  return out;
}

double clip_grad_norm(std::vector<ParamSet*> grads, double max_norm) {
  double sq = 0.0;
  for (const ParamSet* g : grads)
    for (const auto& [name, t] : *g)
      for (float v : t.values()) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (ParamSet* g : grads)
      for (auto& [name, t] : *g)
        for (float& v : t.values()) v = static_cast<float>(v * s);
  }
  return norm;
}

Tensor init_weight(RandomSource& rng, std::size_t fan_in, std::size_t fan_out) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(std::max<std::size_t>(fan_in, 1)));
  return uniform(rng, {fan_in, fan_out}, -bound, bound);
}

}  // namespace cddm
