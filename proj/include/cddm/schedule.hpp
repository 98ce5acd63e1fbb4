#pragma once

#include <utility>
#include <vector>

#include "cddm/random.hpp"
#include "cddm/tensor.hpp"

namespace cddm {

struct AlphaSigma {
  double alpha;
  double sigma;
};

// Variance-preserving schedule, linear in alpha over continuous time k in [0,1]:
// alpha(k) = alpha_start + k (alpha_end - alpha_start), sigma(k) = sqrt(1 - alpha(k)^2).
// Optional knots (k, alpha) replace the line with a piecewise-linear alpha through them.
struct NoiseSchedule {
  double alpha_start = 0.9999;
  double alpha_end = 0.0001;
  double sigma_floor = 1e-4;
  std::vector<std::pair<double, double>> knots;

  static NoiseSchedule piecewise(std::vector<std::pair<double, double>> knots);

  void validate() const;
  AlphaSigma at(double k) const;
  // Discretized-chain variance between two times: 1 - (alpha(k_from)/alpha(k_to))^2.
  double beta(double k_from, double k_to) const;
  double snr(double k) const;

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;
};

AlphaSigma alpha_sigma(const NoiseSchedule& sched, double k);

// Strictly decreasing times 1 = k_S > ... > k_0 = 0.
class StepPlan {
 public:
  // Uniform plan with `steps` transitions.
  static StepPlan uniform(std::size_t steps);
  static StepPlan from_times(std::vector<double> times);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t steps() const noexcept { return times_.size() - 1; }

 private:
  explicit StepPlan(std::vector<double> times) : times_(std::move(times)) {}
  std::vector<double> times_;
};

Tensor q_sample(const Tensor& y0, double k, const Tensor& eps, const NoiseSchedule& sched);
Tensor v_target(const Tensor& y0, const Tensor& eps, double k, const NoiseSchedule& sched);
Tensor x0_from_v(const Tensor& yk, const Tensor& v, double k, const NoiseSchedule& sched);
// Throws BoundaryStepError when sigma(k) is below the schedule's floor.
Tensor eps_from_x0(const Tensor& y, const Tensor& x0, double k, const NoiseSchedule& sched);

// Deterministic part of a DDIM move from k_from to k_to with noise coefficient s:
// alpha_to x0 + sqrt(sigma_to^2 - s^2)/sigma_from (y - alpha_from x0).
Tensor ddim_mean(const Tensor& yk, const Tensor& x0, double k_from, double k_to, double noise_scale,
                 const NoiseSchedule& sched);
// ddim_mean plus s * N(0, I). `rng` may be null only when noise_scale == 0.
Tensor ddim_step(const Tensor& yk, const Tensor& x0, double k_from, double k_to, double noise_scale,
                 const NoiseSchedule& sched, RandomSource* rng);

// Mean of the Gaussian posterior q(y_to | y_from, x0) of the chain discretized between the two times.
Tensor ancestral_mean(const Tensor& yk, const Tensor& x0, double k_from, double k_to, const NoiseSchedule& sched);
// Posterior mean from x0_from_v(v_hat) plus sqrt(beta) noise; noiseless when k_to == 0.
Tensor ancestral_step(const Tensor& yk, const Tensor& v_hat, double k_from, double k_to, const NoiseSchedule& sched,
                      RandomSource& rng);

}  // namespace cddm
