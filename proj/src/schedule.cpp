#include "cddm/schedule.hpp"

#include <cmath>
#include <string>

#include "cddm/errors.hpp"

namespace cddm {
namespace {

void require_time(double k, const char* what) {
  require(k >= 0.0 && k <= 1.0, std::string(what) + ": time " + std::to_string(k) + " outside [0,1]");
}

void require_match(const Tensor& a, const Tensor& b, const char* what) {
  require(a.shape() == b.shape(),
          std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// out = ca * a + cb * b, evaluated in double per element.
Tensor combine(double ca, const Tensor& a, double cb, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(ca * a[i] + cb * b[i]);
  return out;
}

}  // namespace

NoiseSchedule NoiseSchedule::piecewise(std::vector<std::pair<double, double>> knots) {
  require(knots.size() >= 2 && knots.front().first == 0.0 && knots.back().first == 1.0,
          "piecewise schedule knots must span k = 0 .. 1");
  NoiseSchedule s;
  s.alpha_start = knots.front().second;
  s.alpha_end = knots.back().second;
  s.knots = std::move(knots);
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  require(0.0 < alpha_end && alpha_end < alpha_start && alpha_start < 1.0,
          "noise schedule requires 0 < alpha_end < alpha_start < 1");
  require(sigma_floor > 0.0, "sigma floor must be positive");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    require(knots[i].first > knots[i - 1].first && knots[i].second < knots[i - 1].second,
            "schedule knots must be increasing in k and decreasing in alpha");
  }
}

AlphaSigma NoiseSchedule::at(double k) const {
  require_time(k, "alpha_sigma");
  double a = alpha_start + k * (alpha_end - alpha_start);
  if (!knots.empty()) {
    std::size_t i = 1;
    while (i + 1 < knots.size() && knots[i].first < k) ++i;
    const auto [k0, a0] = knots[i - 1];
    const auto [k1, a1] = knots[i];
    a = a0 + (k - k0) / (k1 - k0) * (a1 - a0);
  }
  return {a, std::sqrt(1.0 - a * a)};
}

double NoiseSchedule::beta(double k_from, double k_to) const {
  const double ratio = at(k_from).alpha / at(k_to).alpha;
  return 1.0 - ratio * ratio;
}

double NoiseSchedule::snr(double k) const {
  const auto [a, s] = at(k);
  return (a * a) / (s * s);
}

AlphaSigma alpha_sigma(const NoiseSchedule& sched, double k) { return sched.at(k); }

StepPlan StepPlan::uniform(std::size_t steps) {
  require(steps >= 1, "step plan needs at least one step");
  std::vector<double> times(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) times[i] = static_cast<double>(steps - i) / static_cast<double>(steps);
  return StepPlan(std::move(times));
}

StepPlan StepPlan::from_times(std::vector<double> times) {
  require(times.size() >= 2, "step plan needs at least two times");
  require(times.front() == 1.0 && times.back() == 0.0, "step plan must start at 1 and end at 0");
  for (std::size_t i = 1; i < times.size(); ++i) require(times[i] < times[i - 1], "step plan must strictly decrease");
  return StepPlan(std::move(times));
}

Tensor q_sample(const Tensor& y0, double k, const Tensor& eps, const NoiseSchedule& sched) {
  require_match(y0, eps, "q_sample");
  const auto [a, s] = sched.at(k);
  return combine(a, y0, s, eps);
}

Tensor v_target(const Tensor& y0, const Tensor& eps, double k, const NoiseSchedule& sched) {
  require_match(y0, eps, "v_target");
  const auto [a, s] = sched.at(k);
  return combine(a, eps, -s, y0);
}

Tensor x0_from_v(const Tensor& yk, const Tensor& v, double k, const NoiseSchedule& sched) {
  require_match(yk, v, "x0_from_v");
  const auto [a, s] = sched.at(k);
  return combine(a, yk, -s, v);
}

Tensor eps_from_x0(const Tensor& y, const Tensor& x0, double k, const NoiseSchedule& sched) {
  require_match(y, x0, "eps_from_x0");
  const auto [a, s] = sched.at(k);
  if (s < sched.sigma_floor) {
    throw BoundaryStepError("eps_from_x0: sigma(" + std::to_string(k) +
                            ") below floor; use the x0-space target at the boundary step");
  }
  return combine(1.0 / s, y, -a / s, x0);
}

Tensor ddim_mean(const Tensor& yk, const Tensor& x0, double k_from, double k_to, double noise_scale,
                 const NoiseSchedule& sched) {
  require_match(yk, x0, "ddim_step");
  require(k_to <= k_from, "ddim_step: k_to must precede k_from");
  const auto [a_from, s_from] = sched.at(k_from);
  const auto [a_to, s_to] = sched.at(k_to);
  require(noise_scale >= 0.0 && noise_scale * noise_scale <= s_to * s_to,
          "ddim_step: noise scale exceeds sigma at target time");
  if (k_to == k_from && noise_scale == 0.0) return yk;
  if (s_from < sched.sigma_floor) throw BoundaryStepError("ddim_step: sigma at source time below floor");
  const double c = std::sqrt(s_to * s_to - noise_scale * noise_scale) / s_from;
  // alpha_to x0 + c (y - alpha_from x0)
  return combine(a_to - c * a_from, x0, c, yk);
}

Tensor ddim_step(const Tensor& yk, const Tensor& x0, double k_from, double k_to, double noise_scale,
                 const NoiseSchedule& sched, RandomSource* rng) {
  require(k_to < k_from || (k_to == k_from && noise_scale == 0.0), "ddim_step: k_to must be below k_from");
  Tensor out = ddim_mean(yk, x0, k_from, k_to, noise_scale, sched);
  if (noise_scale > 0.0) {
    require(rng != nullptr, "ddim_step: stochastic step needs a random source");
    for (float& v : out.values()) v = static_cast<float>(v + noise_scale * rng->normal());
  }
  return out;
}

Tensor ancestral_mean(const Tensor& yk, const Tensor& x0, double k_from, double k_to, const NoiseSchedule& sched) {
  require_match(yk, x0, "ancestral_step");
  require(k_to < k_from, "ancestral_step: k_to must be below k_from");
  const auto [a_t, s_t] = sched.at(k_from);
  const auto [a_s, s_s] = sched.at(k_to);
  const double a_ts = a_t / a_s;
  const double beta = 1.0 - a_ts * a_ts;
  const double var_t = s_t * s_t;
  return combine(a_s * beta / var_t, x0, a_ts * s_s * s_s / var_t, yk);
}

Tensor ancestral_step(const Tensor& yk, const Tensor& v_hat, double k_from, double k_to, const NoiseSchedule& sched,
                      RandomSource& rng) {
  const Tensor x0 = x0_from_v(yk, v_hat, k_from, sched);
  Tensor out = ancestral_mean(yk, x0, k_from, k_to, sched);
  if (k_to > 0.0) {
    const double sd = std::sqrt(sched.beta(k_from, k_to));
    for (float& v : out.values()) v = static_cast<float>(v + sd * rng.normal());
  }
  return out;
}

}  // namespace cddm
