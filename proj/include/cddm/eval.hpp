#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cddm/data.hpp"
#include "cddm/model.hpp"
#include "cddm/schedule.hpp"

namespace cddm {

using Trajectory = std::vector<Vec2>;

struct PredictionSet {
  std::vector<Trajectory> samples;      // kept samples, in stream order
  std::vector<std::size_t> stream_ids;  // stream index of each kept sample
  std::size_t flagged = 0;              // samples dropped for non-finite values
  std::string checkpoint_id;
  std::size_t steps = 0;
  std::string sampler;
  std::uint64_t seed = 0;
};

double trajectory_ade(const Trajectory& pred, const Trajectory& gt);
double trajectory_fde(const Trajectory& pred, const Trajectory& gt);
double min_ade(const PredictionSet& preds, const Trajectory& gt);
double min_fde(const PredictionSet& preds, const Trajectory& gt);

enum class SamplerKind { Ddim, Ancestral };
std::string sampler_name(SamplerKind kind);
SamplerKind parse_sampler(const std::string& name);

// Raw decoder output for rows y[B,P,2] at the given labels with contexts f[B,F].
using DenoiserFn = std::function<Tensor(const Tensor& y, std::span<const double> labels, const Tensor& f)>;

struct SamplingOptions {
  StepPlan plan = StepPlan::uniform(4);
  std::size_t samples = 20;  // N
  SamplerKind sampler = SamplerKind::Ddim;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t max_rows = 160;  // rows per batched denoiser call
  // Incremented by the number of rows of every denoiser call, i.e. per-sample evaluations.
  std::atomic<std::size_t>* evaluations = nullptr;
  std::atomic<std::size_t>* calls = nullptr;
};

// What the sampler needs besides the windows: a decoder, its label convention, the
// context features of each window and the target standardization.
struct SamplingInputs {
  DenoiserFn denoiser;
  double label_offset = 0.0;
  const NoiseSchedule* schedule = nullptr;
  const Standardizer* standardizer = nullptr;
  Tensor features;  // [W, F], one row per window
};

// Per window, N samples drawn from streams 0..N-1 of the window's own source, so any
// prefix of the samples equals a smaller-N run and results do not depend on batching.
std::vector<PredictionSet> sample_predictions(const SamplingInputs& inputs,
                                              std::span<const TrajectoryWindow* const> windows,
                                              std::span<const std::size_t> window_ids, const SamplingOptions& opts);
std::vector<PredictionSet> sample_predictions(const Model& model, std::span<const TrajectoryWindow* const> windows,
                                              std::span<const std::size_t> window_ids, const SamplingOptions& opts);

struct MetricsReport {
  double min_ade = 0.0;
  double min_fde = 0.0;
  std::size_t windows = 0;
  std::size_t flagged = 0;
  std::uint64_t encoder_params = 0;
  std::uint64_t decoder_params = 0;
  std::uint64_t total_params = 0;
  std::uint64_t flops = 0;
  double latency_ms = 0.0;
  std::size_t steps = 0;
  std::size_t samples = 0;
  std::string sampler;
  std::string checkpoint_id;
  std::string config_hash;
  std::vector<std::string> warnings;
  // Per window, the ADE / FDE of every sample in stream order (NaN when flagged).
  std::vector<std::vector<double>> sample_ade;
  std::vector<std::vector<double>> sample_fde;

  // Mean over windows of the best of the first n samples.
  double min_ade_at(std::size_t n) const;
  double min_fde_at(std::size_t n) const;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

struct EvalOptions {
  SamplingOptions sampling;
  std::size_t latency_repetitions = 5;  // 0 skips the latency benchmark
  std::string checkpoint_id;
  std::string config_hash;
};

MetricsReport evaluate(const Model& model, std::span<const TrajectoryWindow> windows, const EvalOptions& opts);

// Milliseconds since an arbitrary origin.
using Timer = std::function<double()>;
double steady_clock_ms();

// Median wall-clock of the N=1 sampling loop for one window, after one warm-up run.
double bench_latency(const Model& model, const TrajectoryWindow& window, const StepPlan& plan,
                     std::size_t repetitions, const Timer& timer = steady_clock_ms);
// The same measurement around an arbitrary callable.
double median_latency(const std::function<void()>& body, std::size_t repetitions, const Timer& timer);

}  // namespace cddm
