#pragma once

#include <cstdint>

#include "cddm/params.hpp"

namespace cddm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  AdamWConfig hp;
  ParamSet first_moment;
  ParamSet second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ParamSet& params, AdamWConfig hp = {});
};

// Decoupled weight decay (p *= 1 - lr*wd) followed by the bias-corrected Adam step.
void adamw_step(OptimizerState& state, ParamSet& params, const ParamSet& grads);

struct EmaState {
  ParamSet shadow;
  double decay = 0.999;
};

// shadow = decay * shadow + (1 - decay) * params, elementwise.
void ema_update(EmaState& ema, const ParamSet& params);
// Same update with an explicit decay (warm-up schedules pass a smaller one early on).
void ema_update(EmaState& ema, const ParamSet& params, double decay);

}  // namespace cddm
