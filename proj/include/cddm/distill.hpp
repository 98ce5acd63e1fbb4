#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cddm/data.hpp"
#include "cddm/model.hpp"
#include "cddm/optim.hpp"
#include "cddm/schedule.hpp"

namespace cddm {

// Standardized encoder inputs and velocity targets for a whole split.
struct TrainingSet {
  EncoderBatch inputs;
  Tensor targets;  // [N, P, 2]

  static TrainingSet build(std::span<const TrajectoryWindow> windows, const Standardizer& standardizer);
  std::size_t size() const { return targets.empty() ? 0 : targets.dim(0); }
};

struct ProgressRow {
  std::string phase;  // pretrain, cpd, pd
  std::size_t iteration = 0;
  std::size_t step = 0;
  std::size_t steps = 0;  // K being trained for
  double student_total = 0.0;
  double teacher_term = 0.0;
  double data_term = 0.0;
  double accel = 0.0;
  double seconds = 0.0;
};

// Comma-separated training log. Rows are kept in memory and optionally streamed.
class ProgressLog {
 public:
  explicit ProgressLog(std::ostream* sink = nullptr, std::size_t every = 100);
  static std::string header();
  static std::string format(const ProgressRow& row);

  bool due(std::size_t step) const { return every_ != 0 && step % every_ == 0; }
  void record(const ProgressRow& row);
  const std::vector<ProgressRow>& rows() const { return rows_; }

 private:
  std::ostream* sink_;
  std::size_t every_;
  std::vector<ProgressRow> rows_;
};

struct PretrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 32;
  std::size_t K = 128;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double ema_decay = 0.999;
  double grad_clip = 1.0;
  bool train_encoder = true;

  void validate() const;
};

struct PretrainResult {
  ParamSet decoder;  // EMA
  ParamSet encoder;  // EMA when trained, else the input encoder
  double initial_loss = 0.0;
  double final_loss = 0.0;  // mean over the last 100 steps
};

// v-target diffusion training with k = i/K, i ~ U{1..K}. Jointly trains the encoder
// unless cfg.train_encoder is false.
PretrainResult pretrain(const DenoiserConfig& dcfg, const EncoderConfig& ecfg, ParamSet decoder, ParamSet encoder,
                        const TrainingSet& data, const NoiseSchedule& sched, const PretrainConfig& cfg,
                        std::uint64_t seed, ProgressLog* log = nullptr);

// One AdamW step of the pretraining objective mean ||F(y, label) - v_true||^2.
float pretrain_update(const DenoiserConfig& dcfg, ParamSet& params, OptimizerState& opt, const Tensor& y,
                      std::span<const double> labels, const Tensor& f, const Tensor& v_true, double grad_clip);

struct TwoStepTarget {
  Tensor v_teacher;     // zero on boundary rows
  Tensor y0_hat;        // first teacher reconstruction
  Tensor y_kprime;      // intermediate DDIM state
  Tensor y0_hat_prime;  // second teacher reconstruction
  Tensor eps_hat;       // zero on boundary rows
  std::vector<double> k, k_prime, k_dprime;
  std::vector<char> boundary;  // 1 where the x0-space fallback applies

  bool any_boundary() const;
};

// Two DDIM half-steps of the teacher from each row's k = i/K_student, converted into the
// v target for a single student step to k'' = k - 1/K_student. Rows at i = 1, or with
// sigma(k'') under the floor, are flagged for x0-space matching against y0_hat_prime.
TwoStepTarget teacher_two_step_target(const VPredictor& teacher, const Tensor& y_k, std::span<const double> k,
                                      std::size_t student_steps, const NoiseSchedule& sched);

struct LossBreakdown {
  double student_total = 0.0;
  double teacher_term = 0.0;
  double data_term = 0.0;
  double accel = 0.0;
};

// (1 - lambda) mse(v_student, v_teacher) + lambda mse(v_student, v_true), mean reduction.
LossBreakdown student_loss(const Tensor& v_student, const Tensor& v_teacher, const Tensor& v_true, double lambda);
double accel_loss(const Tensor& v_accel, const Tensor& v_teacher);

// Inputs of one distillation update, shared by the student and the accelerated teacher.
struct DistillBatch {
  Tensor y_k;                   // noisy inputs at k
  std::vector<double> labels;   // k''
  Tensor f;                     // frozen-encoder context
  TwoStepTarget target;
  Tensor v_true;                // v_target(y0, eps, k'')
  Tensor y0;
};

// Student update on the dual-signal loss; boundary rows compare x0 reconstructions instead.
LossBreakdown student_update(const DenoiserConfig& dcfg, ParamSet& params, OptimizerState& opt,
                             const DistillBatch& batch, double lambda, const NoiseSchedule& sched, double grad_clip);
// Accelerated-teacher update on mse against the two-step target.
double accel_update(const DenoiserConfig& dcfg, ParamSet& params, OptimizerState& opt, const DistillBatch& batch,
                    const NoiseSchedule& sched, double grad_clip);

struct DistillConfig {
  double lambda = 0.5;
  std::size_t K_start = 128;
  std::size_t K_target = 4;
  std::size_t steps_per_iteration = 10000;
  std::size_t batch = 32;
  double lr = 1e-3;
  double accel_lr = 3e-4;
  double weight_decay = 1e-4;
  double ema_decay = 0.999;
  double grad_clip = 1.0;
  std::size_t plateau_window = 500;
  double plateau_tolerance = 1e-4;
  bool disable_acceleration = false;
  bool disable_compression = false;
  bool disable_data_regularization = false;
  bool disable_weight_initialization = false;

  void validate() const;
  std::size_t iterations() const;
};

struct DistillState {
  ParamSet teacher_frozen;
  ParamSet teacher_accel;
  ParamSet student;
  ParamSet encoder;
  double teacher_offset = 0.0;  // label offset the frozen teacher was trained with
  std::size_t K = 128;          // teacher steps entering the next iteration
  std::size_t iteration = 0;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t K = 0;  // student steps after the iteration
  ParamSet teacher;
  ParamSet student;
  LossBreakdown final_loss;
  std::size_t steps_run = 0;
  double seconds = 0.0;
};

struct DistillModels {
  DenoiserConfig teacher;
  DenoiserConfig student;
};

// Runs one halving iteration of collaborative progressive distillation.
DistillState cpd_iteration(const DistillModels& models, DistillState state, const Tensor& features,
                           const TrainingSet& data, const NoiseSchedule& sched, const DistillConfig& cfg,
                           std::uint64_t seed, ProgressLog* log = nullptr, IterationRecord* record = nullptr);

using IterationCallback = std::function<void(const IterationRecord&)>;

struct DistillResult {
  DistillState state;
  std::vector<IterationRecord> history;
};

DistillResult cpd_run(const DistillModels& models, const ParamSet& teacher, const ParamSet& student,
                      const EncoderConfig& ecfg, const ParamSet& encoder, const TrainingSet& data,
                      const NoiseSchedule& sched, const DistillConfig& cfg, std::uint64_t seed,
                      ProgressLog* log = nullptr, const IterationCallback& on_iteration = {});

// Same-size progressive distillation: each student starts as a copy of its teacher.
DistillResult pd_run(const DenoiserConfig& dcfg, const ParamSet& model, const EncoderConfig& ecfg,
                     const ParamSet& encoder, const TrainingSet& data, const NoiseSchedule& sched,
                     const DistillConfig& cfg, std::uint64_t seed, ProgressLog* log = nullptr,
                     const IterationCallback& on_iteration = {});

}  // namespace cddm
