#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cddm/autodiff.hpp"
#include "cddm/random.hpp"
#include "cddm/tensor.hpp"

namespace cddm {

// Named parameter tensors. Iteration order is lexicographic by name, which fixes
// the fingerprint and the checkpoint payload order.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void set(const std::string& name, Tensor value) { tensors_[name] = std::move(value); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  std::size_t tensor_count() const noexcept { return tensors_.size(); }
  // Total learnable scalars.
  std::size_t scalar_count() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  // FNV-1a over names, shapes and raw value bytes.
  std::uint64_t fingerprint() const;
  bool same_structure(const ParamSet& other) const;
  ParamSet zeros_like() const;
  // Copy of the subset whose names start with `prefix`, with the prefix removed.
  ParamSet with_prefix_removed(const std::string& prefix) const;
  // Inserts every tensor of `other` under `prefix + name`.
  void merge(const ParamSet& other, const std::string& prefix);

  friend bool operator==(const ParamSet& a, const ParamSet& b) = default;

 private:
  Map tensors_;
};

// Graph leaves bound to a ParamSet for one forward evaluation.
class VarMap {
 public:
  // trainable=false binds constants, so forward passes record no tape.
  VarMap(const ParamSet& params, bool trainable);
  const Var& operator[](const std::string& name) const;
  const std::map<std::string, Var>& vars() const noexcept { return vars_; }

 private:
  std::map<std::string, Var> vars_;
};

struct ValueAndGrad {
  float loss = 0.0f;
  ParamSet grads;
};

// Reverse-mode gradient of a scalar computation over `params`. Parameters the loss
// does not reach receive zero gradients.
ValueAndGrad value_and_grad(const ParamSet& params, const std::function<Var(const VarMap&)>& loss_fn);
ParamSet grad(const ParamSet& params, const std::function<Var(const VarMap&)>& loss_fn);

// Joint gradient over several parameter sets bound side by side (decoder + encoder).
struct MultiValueAndGrad {
  float loss = 0.0f;
  std::vector<ParamSet> grads;
};
MultiValueAndGrad value_and_grad(const std::vector<const ParamSet*>& params,
                                 const std::function<Var(const std::vector<VarMap>&)>& loss_fn);

// Scales `grads` in place so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::vector<ParamSet*> grads, double max_norm);

// Fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_weight(RandomSource& rng, std::size_t fan_in, std::size_t fan_out);

}  // namespace cddm
