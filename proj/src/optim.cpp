#include "cddm/optim.hpp"

#include <cmath>

#include "cddm/errors.hpp"

namespace cddm {

OptimizerState OptimizerState::for_params(const ParamSet& params, AdamWConfig hp) {
  OptimizerState s;
  s.hp = hp;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  return s;
}

void adamw_step(OptimizerState& state, ParamSet& params, const ParamSet& grads) {
  require(params.same_structure(grads), "adamw_step: gradients do not match parameters");
  require(params.same_structure(state.first_moment), "adamw_step: optimizer state does not match parameters");
  state.step += 1;
  const auto& hp = state.hp;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  const double decay = 1.0 - hp.lr * hp.weight_decay;
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.first_moment.at(name);
    Tensor& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
      const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = hp.lr * (mi / bc1) / (std::sqrt(vi / bc2) + hp.eps);
      p[i] = static_cast<float>(static_cast<double>(p[i]) * decay - update);
    }
  }
}

void ema_update(EmaState& ema, const ParamSet& params) { ema_update(ema, params, ema.decay); }

void ema_update(EmaState& ema, const ParamSet& params, double decay) {
  require(decay >= 0.0 && decay <= 1.0, "ema decay must lie in [0,1]");
  require(ema.shadow.same_structure(params), "ema_update: shadow does not match parameters");
  const auto d = static_cast<float>(decay);
  const auto w = static_cast<float>(1.0 - decay);
  for (auto& [name, s] : ema.shadow) {
    const Tensor& p = params.at(name);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = d * s[i] + w * p[i];
  }
}

}  // namespace cddm
