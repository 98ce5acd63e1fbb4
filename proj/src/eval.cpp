#include "cddm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cddm/errors.hpp"

namespace cddm {

double trajectory_ade(const Trajectory& pred, const Trajectory& gt) {
  require(!gt.empty() && pred.size() == gt.size(), "ADE: prediction has " + std::to_string(pred.size()) +
                                                       " points, ground truth " + std::to_string(gt.size()));
  double s = 0.0;
  for (std::size_t t = 0; t < gt.size(); ++t) s += std::hypot(pred[t].x - gt[t].x, pred[t].y - gt[t].y);
  return s / static_cast<double>(gt.size());
}

double trajectory_fde(const Trajectory& pred, const Trajectory& gt) {
  require(!gt.empty() && pred.size() == gt.size(), "FDE: prediction has " + std::to_string(pred.size()) +
                                                       " points, ground truth " + std::to_string(gt.size()));
  return std::hypot(pred.back().x - gt.back().x, pred.back().y - gt.back().y);
}

double min_ade(const PredictionSet& preds, const Trajectory& gt) {
  require(!preds.samples.empty(), "minADE: empty prediction set");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : preds.samples) best = std::min(best, trajectory_ade(s, gt));
  return best;
}

double min_fde(const PredictionSet& preds, const Trajectory& gt) {
  require(!preds.samples.empty(), "minFDE: empty prediction set");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : preds.samples) best = std::min(best, trajectory_fde(s, gt));
  return best;
}

std::string sampler_name(SamplerKind kind) { return kind == SamplerKind::Ddim ? "ddim" : "ancestral"; }

SamplerKind parse_sampler(const std::string& name) {
  if (name == "ddim") return SamplerKind::Ddim;
  if (name == "ancestral") return SamplerKind::Ancestral;
  throw ConfigError("unknown sampler '" + name + "' (expected ddim or ancestral)");
}

namespace {

struct Chunk {
  std::size_t begin;
  std::size_t end;
};

void run_chunk(const SamplingInputs& in, std::span<const TrajectoryWindow* const> windows,
               std::span<const std::size_t> window_ids, const SamplingOptions& opts, Chunk chunk,
               std::vector<PredictionSet>& out) {
  const std::size_t n = opts.samples;
  const std::size_t rows = (chunk.end - chunk.begin) * n;
  const std::size_t horizon = windows[chunk.begin]->horizon();
  const std::size_t width = in.features.dim(1);
  const NoiseSchedule& sched = *in.schedule;

  std::vector<RandomSource> rngs;
  rngs.reserve(rows);
  Tensor f({rows, width});
  for (std::size_t w = chunk.begin; w < chunk.end; ++w) {
    require(windows[w]->horizon() == horizon, "sampling: windows disagree on horizon");
    const RandomSource window_rng(opts.seed, window_ids[w]);
    for (std::size_t j = 0; j < n; ++j) {
      rngs.push_back(window_rng.derive(j));
      std::copy(in.features.data() + w * width, in.features.data() + (w + 1) * width,
                f.data() + ((w - chunk.begin) * n + j) * width);
    }
  }
  const std::size_t row_size = horizon * 2;
  Tensor y({rows, horizon, 2});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < row_size; ++j) y[r * row_size + j] = static_cast<float>(rngs[r].normal());

  const auto& times = opts.plan.times();
  std::vector<double> labels(rows);
  for (std::size_t s = 0; s + 1 < times.size(); ++s) {
    const double kf = times[s], kt = times[s + 1];
    const double label = std::max(0.0, kf - in.label_offset);
    std::fill(labels.begin(), labels.end(), label);
    const Tensor v = in.denoiser(y, labels, f);
    if (opts.evaluations) *opts.evaluations += rows;
    if (opts.calls) *opts.calls += 1;
    const Tensor x0 = x0_from_v(y, v, reading_time(label, kf), sched);
    if (kt == 0.0) {
      y = x0;
      break;
    }
    if (opts.sampler == SamplerKind::Ddim) {
      y = ddim_mean(y, x0, kf, kt, 0.0, sched);
    } else {
      y = ancestral_mean(y, x0, kf, kt, sched);
      const double sd = std::sqrt(sched.beta(kf, kt));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < row_size; ++j)
          y[r * row_size + j] = static_cast<float>(y[r * row_size + j] + sd * rngs[r].normal());
    }
  }

  for (std::size_t w = chunk.begin; w < chunk.end; ++w) {
    PredictionSet& ps = out[w];
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t r = (w - chunk.begin) * n + j;
      Tensor row({horizon, 2}, std::vector<float>(y.data() + r * row_size, y.data() + (r + 1) * row_size));
      if (!row.all_finite()) {
        ++ps.flagged;
        continue;
      }
      Trajectory traj = integrate_velocity(in.standardizer->to_velocity(row), windows[w]->anchor, windows[w]->dt);
      const bool finite = std::all_of(traj.begin(), traj.end(),
                                      [](const Vec2& p) { return std::isfinite(p.x) && std::isfinite(p.y); });
      if (!finite) {
        ++ps.flagged;
        continue;
      }
      ps.samples.push_back(std::move(traj));
      ps.stream_ids.push_back(j);
    }
  }
}

}  // namespace

std::vector<PredictionSet> sample_predictions(const SamplingInputs& inputs,
                                              std::span<const TrajectoryWindow* const> windows,
                                              std::span<const std::size_t> window_ids, const SamplingOptions& opts) {
  require(opts.samples >= 1, "sampling: N must be >= 1");
  require(windows.size() == window_ids.size(), "sampling: one id per window required");
  require(inputs.schedule && inputs.standardizer && inputs.denoiser, "sampling: incomplete inputs");
  require(inputs.features.rank() == 2 && inputs.features.dim(0) == windows.size(),
          "sampling: one feature row per window required");
  const auto& times = opts.plan.times();
  require(times.front() == 1.0 && times.back() == 0.0, "sampling: step plan must run from 1 to 0");

  std::vector<PredictionSet> out(windows.size());
  for (auto& ps : out) {
    ps.steps = opts.plan.steps();
    ps.sampler = sampler_name(opts.sampler);
    ps.seed = opts.seed;
  }
  const std::size_t per_chunk = std::max<std::size_t>(1, opts.max_rows / opts.samples);
  std::vector<Chunk> chunks;
  for (std::size_t b = 0; b < windows.size(); b += per_chunk) chunks.push_back({b, std::min(windows.size(), b + per_chunk)});

  const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(chunks.size(), 1));
  if (threads == 1) {
    for (const Chunk& c : chunks) run_chunk(inputs, windows, window_ids, opts, c, out);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t c = t; c < chunks.size(); c += threads) run_chunk(inputs, windows, window_ids, opts, chunks[c], out);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

// Decoder call that turns a non-finite batch into per-row evaluation, so only the rows
// that actually overflow come back as NaN and get flagged.
DenoiserFn guarded(const BoundDecoder& decoder) {
  return [&decoder](const Tensor& y, std::span<const double> labels, const Tensor& f) {
    try {
      return decoder(y, labels, f);
    } catch (const NumericOverflow&) {
      Tensor out(y.shape(), std::numeric_limits<float>::quiet_NaN());
      const std::size_t w = y.size() / y.dim(0);
      for (std::size_t r = 0; r < y.dim(0); ++r) {
        const std::vector<std::size_t> one{r};
        try {
          const Tensor v = decoder(gather_rows(y, one), labels.subspan(r, 1), gather_rows(f, one));
          std::copy(v.values().begin(), v.values().end(), out.data() + r * w);
        } catch (const NumericOverflow&) {
        }
      }
      return out;
    }
  };
}

Tensor window_features(const Model& model, std::span<const TrajectoryWindow* const> windows) {
  return encode_all(model.encoder, model.encoder_params, model.standardizer.encoder_batch(windows));
}

}  // namespace

std::vector<PredictionSet> sample_predictions(const Model& model, std::span<const TrajectoryWindow* const> windows,
                                              std::span<const std::size_t> window_ids, const SamplingOptions& opts) {
  require(!windows.empty(), "sampling: no windows");
  const BoundDecoder decoder(model.denoiser, model.decoder);
  SamplingInputs in{guarded(decoder), model.label_offset(), &model.schedule, &model.standardizer,
                    window_features(model, windows)};
  return sample_predictions(in, windows, window_ids, opts);
}

namespace {

double mean_best_prefix(const std::vector<std::vector<double>>& errors, std::size_t n) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& w : errors) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < std::min(n, w.size()); ++j)
      if (!std::isnan(w[j])) best = std::min(best, w[j]);
    if (std::isfinite(best)) {
      total += best;
      ++counted;
    }
  }
  return counted == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(counted);
}

}  // namespace

double MetricsReport::min_ade_at(std::size_t n) const { return mean_best_prefix(sample_ade, n); }
double MetricsReport::min_fde_at(std::size_t n) const { return mean_best_prefix(sample_fde, n); }

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["minADE"] = min_ade;
  j["minFDE"] = min_fde;
  j["N"] = samples;
  j["steps"] = steps;
  j["sampler"] = sampler;
  j["windows"] = windows;
  j["flagged_samples"] = flagged;
  j["params"] = {{"encoder", encoder_params}, {"decoder", decoder_params}, {"total", total_params}};
  j["flops"] = flops;
  j["latency_ms"] = latency_ms;
  j["checkpoint"] = checkpoint_id;
  j["config_hash"] = config_hash;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

std::string MetricsReport::csv_header() {
  return "config_hash,checkpoint,sampler,steps,N,windows,minADE,minFDE,flagged,encoder_params,decoder_params,"
         "total_params,flops,latency_ms";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << config_hash << ',' << checkpoint_id << ',' << sampler << ',' << steps << ',' << samples << ',' << windows
     << ',' << min_ade << ',' << min_fde << ',' << flagged << ',' << encoder_params << ',' << decoder_params << ','
     << total_params << ',' << flops << ',' << latency_ms;
  return os.str();
}

MetricsReport evaluate(const Model& model, std::span<const TrajectoryWindow> windows, const EvalOptions& opts) {
  require(!windows.empty(), "evaluate: empty split");
  std::vector<const TrajectoryWindow*> ptrs;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    ptrs.push_back(&windows[i]);
    ids.push_back(i);
  }
  const auto sets = sample_predictions(model, ptrs, ids, opts.sampling);

  MetricsReport r;
  r.windows = windows.size();
  r.samples = opts.sampling.samples;
  r.steps = opts.sampling.plan.steps();
  r.sampler = sampler_name(opts.sampling.sampler) + (r.steps != model.steps ? "-subsampled" : "");
  if (r.steps > model.steps) {
    r.warnings.push_back("evaluating with " + std::to_string(r.steps) + " steps, more than the checkpoint's K = " +
                         std::to_string(model.steps));
  }
  r.checkpoint_id = opts.checkpoint_id;
  r.config_hash = opts.config_hash;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const PredictionSet& ps = sets[w];
    r.flagged += ps.flagged;
    std::vector<double> ade(r.samples, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> fde(r.samples, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t s = 0; s < ps.samples.size(); ++s) {
      ade[ps.stream_ids[s]] = trajectory_ade(ps.samples[s], windows[w].future);
      fde[ps.stream_ids[s]] = trajectory_fde(ps.samples[s], windows[w].future);
    }
    r.sample_ade.push_back(std::move(ade));
    r.sample_fde.push_back(std::move(fde));
  }
  if (r.flagged > 0) r.warnings.push_back(std::to_string(r.flagged) + " non-finite samples excluded");
  r.min_ade = r.min_ade_at(r.samples);
  r.min_fde = r.min_fde_at(r.samples);
  r.encoder_params = count_encoder_params(model.encoder);
  r.decoder_params = count_params(model.denoiser);
  r.total_params = r.encoder_params + r.decoder_params;
  r.flops = estimate_flops(model.denoiser, r.steps);
  if (opts.latency_repetitions > 0)
    r.latency_ms = bench_latency(model, windows[0], opts.sampling.plan, opts.latency_repetitions);
  return r;
}

double steady_clock_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double median_latency(const std::function<void()>& body, std::size_t repetitions, const Timer& timer) {
  require(repetitions >= 3, "bench_latency: at least 3 repetitions required");
  body();
  std::vector<double> ms;
  for (std::size_t i = 0; i < repetitions; ++i) {
    const double t0 = timer();
    body();
    ms.push_back(timer() - t0);
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  return ms.size() % 2 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
}

double bench_latency(const Model& model, const TrajectoryWindow& window, const StepPlan& plan,
                     std::size_t repetitions, const Timer& timer) {
  const BoundDecoder decoder(model.denoiser, model.decoder);
  const TrajectoryWindow* ptr = &window;
  const std::size_t id = 0;
  SamplingOptions opts;
  opts.plan = plan;
  opts.samples = 1;
  return median_latency(
      [&] {
        SamplingInputs in{guarded(decoder), model.label_offset(), &model.schedule, &model.standardizer,
                          window_features(model, {&ptr, 1})};
        sample_predictions(in, {&ptr, 1}, {&id, 1}, opts);
      },
      repetitions, timer);
}

}  // namespace cddm
