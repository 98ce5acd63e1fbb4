#include "cddm/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "cddm/errors.hpp"

namespace cddm {
namespace {

constexpr std::uint64_t kPretrainStream = 0x70726574ULL;
constexpr std::uint64_t kDistillStream = 0x64697374ULL;

double ema_decay_at(double decay, std::uint64_t updates) {
  const double n = static_cast<double>(updates);
  return std::min(decay, (1.0 + n) / (10.0 + n));
}

double linear_lr(double base, std::size_t step, std::size_t total) {
  return base * (1.0 - static_cast<double>(step) / static_cast<double>(std::max<std::size_t>(total, 1)));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Stops training once the windowed mean loss improves by less than `tolerance` (relative).
class PlateauDetector {
 public:
  PlateauDetector(std::size_t window, double tolerance) : window_(window), tolerance_(tolerance) {}

  bool update(double loss) {
    if (window_ == 0) return false;
    sum_ += loss;
    if (++count_ < window_) return false;
    const double mean = sum_ / static_cast<double>(count_);
    sum_ = 0.0;
    count_ = 0;
    const bool flat = has_prev_ && (prev_ - mean) < tolerance_ * std::fabs(prev_);
    prev_ = mean;
    has_prev_ = true;
    return flat;
  }

 private:
  std::size_t window_;
  double tolerance_;
  double sum_ = 0.0;
  std::size_t count_ = 0;
  double prev_ = 0.0;
  bool has_prev_ = false;
};

struct SampledBatch {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> step_index;  // i in 1..K
  Tensor eps;
};

SampledBatch sample_batch(RandomSource& rng, std::size_t dataset_size, std::size_t batch, std::size_t K,
                          const Shape& target_shape) {
  SampledBatch out;
  for (std::size_t b = 0; b < batch; ++b) out.rows.push_back(rng.uniform_int(0, dataset_size - 1));
  for (std::size_t b = 0; b < batch; ++b) out.step_index.push_back(rng.uniform_int(1, K));
  out.eps = gaussian(rng, {batch, target_shape[1], target_shape[2]});
  return out;
}

void apply_update(OptimizerState& opt, ParamSet& params, ParamSet& grads, double grad_clip) {
  clip_grad_norm({&grads}, grad_clip);
  adamw_step(opt, params, grads);
}

// Per-element affine map turning a v prediction into the quantity compared against the
// target: identity on ordinary rows, x0 = alpha y - sigma v on boundary rows.
struct PredictionSpace {
  bool active = false;
  Tensor scale;
  Tensor shift;
};

PredictionSpace prediction_space(const DistillBatch& batch, const NoiseSchedule& sched) {
  PredictionSpace out;
  if (!batch.target.any_boundary()) return out;
  out.active = true;
  out.scale = Tensor(batch.y_k.shape(), 1.0f);
  out.shift = Tensor(batch.y_k.shape(), 0.0f);
  const std::size_t w = batch.y_k.size() / batch.y_k.dim(0);
  for (std::size_t r = 0; r < batch.labels.size(); ++r) {
    if (!batch.target.boundary[r]) continue;
    const AlphaSigma s = sched.at(reading_time(batch.labels[r], batch.target.k[r]));
    for (std::size_t j = r * w; j < (r + 1) * w; ++j) {
      out.scale[j] = static_cast<float>(-s.sigma);
      out.shift[j] = static_cast<float>(s.alpha * batch.y_k[j]);
    }
  }
  return out;
}

Var to_space(const Var& v, const PredictionSpace& space) {
  if (!space.active) return v;
  return ops::add(ops::mul(v, constant(space.scale)), constant(space.shift));
}

// Target in the mixed space: `v_rows` on ordinary rows, `x0_rows` on boundary rows.
Tensor mixed_target(const Tensor& v_rows, const Tensor& x0_rows, const TwoStepTarget& target) {
  if (!target.any_boundary()) return v_rows;
  Tensor out = v_rows;
  const std::size_t w = out.size() / out.dim(0);
  for (std::size_t r = 0; r < target.boundary.size(); ++r) {
    if (!target.boundary[r]) continue;
    std::copy(x0_rows.data() + r * w, x0_rows.data() + (r + 1) * w, out.data() + r * w);
  }
  return out;
}

double mse_double(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mse: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return a.size() == 0 ? 0.0 : s / static_cast<double>(a.size());
}

}  // namespace

TrainingSet TrainingSet::build(std::span<const TrajectoryWindow> windows, const Standardizer& standardizer) {
  require(!windows.empty(), "training set: no windows");
  std::vector<const TrajectoryWindow*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return {standardizer.encoder_batch(ptrs), standardizer.targets(ptrs)};
}

ProgressLog::ProgressLog(std::ostream* sink, std::size_t every) : sink_(sink), every_(every) {
  if (sink_) *sink_ << header() << '\n';
}

std::string ProgressLog::header() {
  return "phase,iteration,step,K,student_total,teacher_term,data_term,accel_loss,wall_seconds";
}

std::string ProgressLog::format(const ProgressRow& row) {
  std::ostringstream os;
  os << std::setprecision(8) << row.phase << ',' << row.iteration << ',' << row.step << ',' << row.steps << ','
     << row.student_total << ',' << row.teacher_term << ',' << row.data_term << ',' << row.accel << ','
     << std::setprecision(4) << std::fixed << row.seconds;
  return os.str();
}

void ProgressLog::record(const ProgressRow& row) {
  rows_.push_back(row);
  if (sink_) *sink_ << format(row) << '\n' << std::flush;
}

void PretrainConfig::validate() const {
  require(batch >= 1 && K >= 1, "pretrain: batch and K must be >= 1");
  require(lr > 0.0 && weight_decay >= 0.0, "pretrain: lr must be positive, weight decay non-negative");
  require(ema_decay >= 0.0 && ema_decay <= 1.0, "pretrain: EMA decay must lie in [0,1]");
}

float pretrain_update(const DenoiserConfig& dcfg, ParamSet& params, OptimizerState& opt, const Tensor& y,
                      std::span<const double> labels, const Tensor& f, const Tensor& v_true, double grad_clip) {
  auto [loss, grads] = value_and_grad(params, [&](const VarMap& p) {
    return ops::mse(denoise(dcfg, p, constant(y), labels, constant(f)), constant(v_true));
  });
  apply_update(opt, params, grads, grad_clip);
  return loss;
}

PretrainResult pretrain(const DenoiserConfig& dcfg, const EncoderConfig& ecfg, ParamSet decoder, ParamSet encoder,
                        const TrainingSet& data, const NoiseSchedule& sched, const PretrainConfig& cfg,
                        std::uint64_t seed, ProgressLog* log) {
  cfg.validate();
  require(data.size() > 0, "pretrain: empty dataset");
  const AdamWConfig hp{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  OptimizerState opt_d = OptimizerState::for_params(decoder, hp);
  OptimizerState opt_e = OptimizerState::for_params(encoder, hp);
  EmaState ema_d{decoder, cfg.ema_decay};
  EmaState ema_e{encoder, cfg.ema_decay};
  const Tensor features = cfg.train_encoder ? Tensor() : encode_all(ecfg, encoder, data.inputs);

  const auto t0 = std::chrono::steady_clock::now();
  PretrainResult out;
  std::vector<double> recent;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    RandomSource rng = RandomSource(seed, kPretrainStream).derive(step);
    const SampledBatch sb = sample_batch(rng, data.size(), cfg.batch, cfg.K, data.targets.shape());
    std::vector<double> ks(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b)
      ks[b] = static_cast<double>(sb.step_index[b]) / static_cast<double>(cfg.K);
    const Tensor y0 = gather_rows(data.targets, sb.rows);
    const Tensor y_k = q_sample_rows(y0, sb.eps, ks, sched);
    const Tensor v = v_target_rows(y0, sb.eps, ks, sched);
    const double lr = linear_lr(cfg.lr, step, cfg.steps);
    opt_d.hp.lr = lr;
    opt_e.hp.lr = lr;

    float loss = 0.0f;
    try {
      if (cfg.train_encoder) {
        const EncoderBatch inputs = gather_batch(data.inputs, sb.rows);
        auto res = value_and_grad({&decoder, &encoder}, [&](const std::vector<VarMap>& maps) {
          const Var f = encode_context(ecfg, maps[1], inputs);
          return ops::mse(denoise(dcfg, maps[0], constant(y_k), ks, f), constant(v));
        });
        loss = res.loss;
        clip_grad_norm({&res.grads[0], &res.grads[1]}, cfg.grad_clip);
        adamw_step(opt_d, decoder, res.grads[0]);
        adamw_step(opt_e, encoder, res.grads[1]);
      } else {
        loss = pretrain_update(dcfg, decoder, opt_d, y_k, ks, gather_rows(features, sb.rows), v, cfg.grad_clip);
      }
    } catch (const NumericOverflow& e) {
      throw DivergenceError("pretrain diverged at step " + std::to_string(step) + " (" + e.primitive() +
                            "): " + e.what());
    }
    const double decay = ema_decay_at(cfg.ema_decay, step);
    ema_update(ema_d, decoder, decay);
    if (cfg.train_encoder) ema_update(ema_e, encoder, decay);

    if (step == 0) out.initial_loss = loss;
    recent.push_back(loss);
    if (recent.size() > 100) recent.erase(recent.begin());
    if (log && (log->due(step) || step + 1 == cfg.steps)) {
      double mean = 0.0;
      for (double l : recent) mean += l;
      mean /= static_cast<double>(recent.size());
      log->record({"pretrain", 0, step, cfg.K, mean, 0.0, mean, 0.0, seconds_since(t0)});
    }
  }
  double mean = 0.0;
  for (double l : recent) mean += l;
  out.final_loss = recent.empty() ? 0.0 : mean / static_cast<double>(recent.size());
  out.decoder = std::move(ema_d.shadow);
  out.encoder = cfg.train_encoder ? std::move(ema_e.shadow) : std::move(encoder);
  return out;
}

bool TwoStepTarget::any_boundary() const {
  return std::any_of(boundary.begin(), boundary.end(), [](char c) { return c != 0; });
}

TwoStepTarget teacher_two_step_target(const VPredictor& teacher, const Tensor& y_k, std::span<const double> k,
                                      std::size_t student_steps, const NoiseSchedule& sched) {
  require(student_steps >= 1, "two-step target: student steps must be >= 1");
  require(y_k.rank() >= 1 && y_k.dim(0) == k.size(), "two-step target: one k per row required");
  const std::size_t rows = k.size();
  const std::size_t w = rows == 0 ? 0 : y_k.size() / rows;
  const double K = static_cast<double>(student_steps);

  TwoStepTarget out;
  out.k.assign(k.begin(), k.end());
  std::vector<std::size_t> index(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double scaled = k[r] * K;
    const double i = std::round(scaled);
    require(std::fabs(scaled - i) < 1e-9 && i >= 1.0 && i <= K,
            "two-step target: k = " + std::to_string(k[r]) + " is not on the 1/" + std::to_string(student_steps) +
                " student grid");
    index[r] = static_cast<std::size_t>(i);
    out.k_prime.push_back((2.0 * i - 1.0) / (2.0 * K));
    out.k_dprime.push_back((i - 1.0) / K);
  }

  auto query = [&](const Tensor& y, std::span<const double> times) {
    Tensor v = teacher(y, times);
    require(v.shape() == y.shape(), "two-step target: teacher output shape mismatch");
    if (!v.all_finite()) throw NumericOverflow("teacher", "teacher produced non-finite output");
    return v;
  };

  out.y0_hat = x0_from_v_rows(y_k, query(y_k, out.k), out.k, sched);
  out.y_kprime = Tensor(y_k.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const AlphaSigma s = sched.at(out.k[r]);
    const AlphaSigma sp = sched.at(out.k_prime[r]);
    for (std::size_t j = r * w; j < (r + 1) * w; ++j) {
      const double x0 = out.y0_hat[j];
      out.y_kprime[j] = static_cast<float>(sp.alpha * x0 + sp.sigma / s.sigma * (y_k[j] - s.alpha * x0));
    }
  }
  out.y0_hat_prime = x0_from_v_rows(out.y_kprime, query(out.y_kprime, out.k_prime), out.k_prime, sched);

  out.v_teacher = Tensor(y_k.shape());
  out.eps_hat = Tensor(y_k.shape());
  out.boundary.assign(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const AlphaSigma s = sched.at(out.k_dprime[r]);
    if (index[r] == 1 || s.sigma < sched.sigma_floor) {
      out.boundary[r] = 1;
      continue;
    }
    for (std::size_t j = r * w; j < (r + 1) * w; ++j) {
      const double x0 = out.y0_hat_prime[j];
      const double eps = (y_k[j] - s.alpha * x0) / s.sigma;
      out.eps_hat[j] = static_cast<float>(eps);
      out.v_teacher[j] = static_cast<float>(s.alpha * eps - s.sigma * x0);
    }
  }
  return out;
}

LossBreakdown student_loss(const Tensor& v_student, const Tensor& v_teacher, const Tensor& v_true, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, "student_loss: lambda must lie in [0,1], got " + std::to_string(lambda));
  LossBreakdown out;
  out.teacher_term = mse_double(v_student, v_teacher);
  out.data_term = mse_double(v_student, v_true);
  out.student_total = (1.0 - lambda) * out.teacher_term + lambda * out.data_term;
  return out;
}

double accel_loss(const Tensor& v_accel, const Tensor& v_teacher) { return mse_double(v_accel, v_teacher); }

LossBreakdown student_update(const DenoiserConfig& dcfg, ParamSet& params, OptimizerState& opt,
                             const DistillBatch& batch, double lambda, const NoiseSchedule& sched, double grad_clip) {
  require(lambda >= 0.0 && lambda <= 1.0, "student_update: lambda must lie in [0,1]");
  const PredictionSpace space = prediction_space(batch, sched);
  const Tensor teacher_target = mixed_target(batch.target.v_teacher, batch.target.y0_hat_prime, batch.target);
  const Tensor data_target = mixed_target(batch.v_true, batch.y0, batch.target);
  LossBreakdown out;
  auto [loss, grads] = value_and_grad(params, [&](const VarMap& p) {
    const Var pred = to_space(denoise(dcfg, p, constant(batch.y_k), batch.labels, constant(batch.f)), space);
    const Var teacher_term = ops::mse(pred, constant(teacher_target));
    const Var data_term = ops::mse(pred, constant(data_target));
    out.teacher_term = teacher_term.value()[0];
    out.data_term = data_term.value()[0];
    return ops::add(ops::scale(teacher_term, static_cast<float>(1.0 - lambda)),
                    ops::scale(data_term, static_cast<float>(lambda)));
  });
  out.student_total = loss;
  apply_update(opt, params, grads, grad_clip);
  return out;
}

double accel_update(const DenoiserConfig& dcfg, ParamSet& params, OptimizerState& opt, const DistillBatch& batch,
                    const NoiseSchedule& sched, double grad_clip) {
  const PredictionSpace space = prediction_space(batch, sched);
  const Tensor target = mixed_target(batch.target.v_teacher, batch.target.y0_hat_prime, batch.target);
  auto [loss, grads] = value_and_grad(params, [&](const VarMap& p) {
    const Var pred = to_space(denoise(dcfg, p, constant(batch.y_k), batch.labels, constant(batch.f)), space);
    return ops::mse(pred, constant(target));
  });
  apply_update(opt, params, grads, grad_clip);
  return loss;
}

void DistillConfig::validate() const {
  require(lambda >= 0.0 && lambda <= 1.0, "distill: lambda must lie in [0,1]");
  require(K_target >= 1 && K_start > K_target && K_start % K_target == 0,
          "distill: K_start must be a multiple of K_target and larger");
  const std::size_t ratio = K_start / K_target;
  require((ratio & (ratio - 1)) == 0, "distill: K_start must equal K_target * 2^N with N >= 1");
  require(batch >= 1 && lr > 0.0 && accel_lr > 0.0, "distill: batch and learning rates must be positive");
  require(ema_decay >= 0.0 && ema_decay <= 1.0, "distill: EMA decay must lie in [0,1]");
}

std::size_t DistillConfig::iterations() const {
  std::size_t n = 0;
  for (std::size_t k = K_start; k > K_target; k /= 2) ++n;
  return n;
}

namespace {

enum class IterationMode { Cpd, Pd };

DistillState run_iteration(IterationMode mode, const DistillModels& models, DistillState state, const Tensor& features,
                           const TrainingSet& data, const NoiseSchedule& sched, const DistillConfig& cfg,
                           std::uint64_t seed, ProgressLog* log, IterationRecord* record) {
  require(state.K >= 2 && state.K % 2 == 0, "distill iteration: teacher steps K must be even");
  require(features.rank() == 2 && features.dim(0) == data.size(), "distill iteration: one feature row per window");
  const std::size_t K_s = state.K / 2;
  const std::size_t iteration = state.iteration + 1;
  const bool pd = mode == IterationMode::Pd;
  const bool train_accel = pd || !cfg.disable_acceleration;
  const bool train_student = !pd && !(cfg.disable_compression && K_s != cfg.K_target);
  const double lambda = cfg.disable_data_regularization ? 0.0 : cfg.lambda;

  RandomSource init_rng = RandomSource(seed, kDistillStream + 1).derive(iteration);
  if (!pd && (cfg.disable_weight_initialization || (cfg.disable_compression && K_s == cfg.K_target)))
    state.student = init_denoiser(models.student, init_rng);
  state.teacher_accel = state.teacher_frozen;

  const BoundDecoder teacher(models.teacher, state.teacher_frozen);
  const AdamWConfig student_hp{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const AdamWConfig accel_hp{pd ? cfg.lr : cfg.accel_lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  OptimizerState opt_s = OptimizerState::for_params(state.student, student_hp);
  OptimizerState opt_a = OptimizerState::for_params(state.teacher_accel, accel_hp);
  EmaState ema_s{state.student, cfg.ema_decay};
  EmaState ema_a{state.teacher_accel, cfg.ema_decay};
  PlateauDetector plateau(cfg.plateau_window, cfg.plateau_tolerance);

  const auto t0 = std::chrono::steady_clock::now();
  LossBreakdown last;
  std::size_t step = 0;
  for (; step < cfg.steps_per_iteration; ++step) {
    RandomSource rng = RandomSource(seed, kDistillStream).derive(iteration).derive(step);
    const SampledBatch sb = sample_batch(rng, data.size(), cfg.batch, K_s, data.targets.shape());
    DistillBatch batch;
    std::vector<double> ks(cfg.batch);
    batch.labels.resize(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      ks[b] = static_cast<double>(sb.step_index[b]) / static_cast<double>(K_s);
      batch.labels[b] = static_cast<double>(sb.step_index[b] - 1) / static_cast<double>(K_s);
    }
    batch.y0 = gather_rows(data.targets, sb.rows);
    batch.f = gather_rows(features, sb.rows);
    batch.y_k = q_sample_rows(batch.y0, sb.eps, ks, sched);
    batch.v_true = v_target_rows(batch.y0, sb.eps, batch.labels, sched);

    LossBreakdown loss;
    try {
      const VPredictor tp = standard_predictor(teacher, batch.f, state.teacher_offset, sched);
      batch.target = teacher_two_step_target(tp, batch.y_k, ks, K_s, sched);
      if (train_student) {
        opt_s.hp.lr = linear_lr(cfg.lr, step, cfg.steps_per_iteration);
        loss = student_update(models.student, state.student, opt_s, batch, lambda, sched, cfg.grad_clip);
        ema_update(ema_s, state.student, ema_decay_at(cfg.ema_decay, step));
      }
      if (train_accel) {
        opt_a.hp.lr = linear_lr(accel_hp.lr, step, cfg.steps_per_iteration);
        loss.accel = accel_update(models.teacher, state.teacher_accel, opt_a, batch, sched, cfg.grad_clip);
        ema_update(ema_a, state.teacher_accel, ema_decay_at(cfg.ema_decay, step));
      }
    } catch (const NumericOverflow& e) {
      throw DivergenceError(std::string(pd ? "pd" : "cpd") + " diverged at iteration " + std::to_string(iteration) +
                            ", step " + std::to_string(step) + " (" + e.primitive() + "): " + e.what());
    }
    last = loss;
    if (log && (log->due(step) || step + 1 == cfg.steps_per_iteration)) {
      log->record({pd ? "pd" : "cpd", iteration, step, K_s, loss.student_total, loss.teacher_term, loss.data_term,
                   loss.accel, seconds_since(t0)});
    }
    if (plateau.update(train_student ? loss.student_total : loss.accel)) {
      ++step;
      break;
    }
  }

  if (train_student) state.student = std::move(ema_s.shadow);
  if (train_accel) {
    state.teacher_accel = std::move(ema_a.shadow);
    state.teacher_frozen = state.teacher_accel;
    state.teacher_offset = 1.0 / static_cast<double>(K_s);
  }
  if (pd) state.student = state.teacher_frozen;
  state.K = K_s;
  state.iteration = iteration;
  if (record) {
    record->iteration = iteration;
    record->K = K_s;
    record->teacher = state.teacher_frozen;
    record->student = state.student;
    record->final_loss = last;
    record->steps_run = step;
    record->seconds = seconds_since(t0);
  }
  return state;
}

}  // namespace

DistillState cpd_iteration(const DistillModels& models, DistillState state, const Tensor& features,
                           const TrainingSet& data, const NoiseSchedule& sched, const DistillConfig& cfg,
                           std::uint64_t seed, ProgressLog* log, IterationRecord* record) {
  cfg.validate();
  return run_iteration(IterationMode::Cpd, models, std::move(state), features, data, sched, cfg, seed, log, record);
}

DistillResult cpd_run(const DistillModels& models, const ParamSet& teacher, const ParamSet& student,
                      const EncoderConfig& ecfg, const ParamSet& encoder, const TrainingSet& data,
                      const NoiseSchedule& sched, const DistillConfig& cfg, std::uint64_t seed, ProgressLog* log,
                      const IterationCallback& on_iteration) {
  cfg.validate();
  require(data.size() > 0, "cpd_run: empty dataset");
  const Tensor features = encode_all(ecfg, encoder, data.inputs);
  DistillResult out;
  out.state = {teacher, teacher, student, encoder, 0.0, cfg.K_start, 0};
  while (out.state.K > cfg.K_target) {
    IterationRecord record;
    out.state = run_iteration(IterationMode::Cpd, models, std::move(out.state), features, data, sched, cfg, seed, log,
                              &record);
    if (on_iteration) on_iteration(record);
    out.history.push_back(std::move(record));
  }
  return out;
}

DistillResult pd_run(const DenoiserConfig& dcfg, const ParamSet& model, const EncoderConfig& ecfg,
                     const ParamSet& encoder, const TrainingSet& data, const NoiseSchedule& sched,
                     const DistillConfig& cfg, std::uint64_t seed, ProgressLog* log,
                     const IterationCallback& on_iteration) {
  cfg.validate();
  require(data.size() > 0, "pd_run: empty dataset");
  const Tensor features = encode_all(ecfg, encoder, data.inputs);
  const DistillModels models{dcfg, dcfg};
  DistillResult out;
  out.state = {model, model, model, encoder, 0.0, cfg.K_start, 0};
  while (out.state.K > cfg.K_target) {
    IterationRecord record;
    out.state = run_iteration(IterationMode::Pd, models, std::move(out.state), features, data, sched, cfg, seed, log,
                              &record);
    if (on_iteration) on_iteration(record);
    out.history.push_back(std::move(record));
  }
  return out;
}

}  // namespace cddm
