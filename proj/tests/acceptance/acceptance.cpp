// Acceptance run: one PASS/FAIL line per criterion, details and tables under --out.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "cddm/checkpoint.hpp"
#include "cddm/config.hpp"
#include "cddm/distill.hpp"
#include "cddm/errors.hpp"
#include "cddm/eval.hpp"
#include "grad_suite.hpp"
#include "oracles.hpp"

using namespace cddm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_s() { return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count(); }

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// |a - b| relative to max(1, |b|), in double.
double rel_dev(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Budgets of the end-to-end experiment.
struct Budget {
  std::size_t teacher_steps = 3000;
  std::size_t student_steps = 3000;
  std::size_t distill_steps = 1000;
  std::size_t pd_steps = 1000;
  std::size_t eval_windows = 100;
  std::size_t samples = 20;
  std::uint64_t seed = 7;
  bool skip_pd = false;
};

// Everything the end-to-end run leaves for the later criteria.
struct EndToEnd {
  bool ran = false;
  std::vector<TrajectoryWindow> test;
  Model teacher;
  Model student;
  Checkpoint student_ckpt;
  MetricsReport teacher_report;
  MetricsReport student_report;
  std::size_t student_evaluations = 0;
  double seconds = 0.0;
};

class Acceptance {
 public:
  Acceptance(fs::path out, Budget budget) : out_(std::move(out)), budget_(budget) { fs::create_directories(out_); }

  Outcome gradients();
  Outcome schedule();
  Outcome two_step_target();
  Outcome loss_contracts();
  Outcome end_to_end();
  Outcome step_economics();
  Outcome size_accounting();
  Outcome metrics();
  Outcome reproducibility();

 private:
  MetricsReport eval(const Model& m, std::size_t steps, std::atomic<std::size_t>* evaluations = nullptr);

  fs::path out_;
  Budget budget_;
  EndToEnd e2e_;
  std::ostringstream table_;
};

Outcome Acceptance::gradients() {
  const double t0 = now_s();
  double worst = 0.0;
  std::string where;
  std::set<std::string> primitives;
  std::size_t checked = 0;
  auto scan = [&](const std::vector<oracle::GradCase>& cases, const std::string& family) {
    for (const auto& c : cases) {
      primitives.insert(family + c.primitive);
      checked += c.report.checked;
      if (c.report.max_rel > worst) {
        worst = c.report.max_rel;
        where = c.primitive + "#" + std::to_string(c.variant) + " " + c.report.worst;
      }
    }
  };
  const auto prim = oracle::primitive_gradient_suite();
  const auto full = oracle::denoiser_gradient_suite();
  scan(prim, "");
  scan(full, "denoiser:");
  const double secs = now_s() - t0;
  const bool seeds_ok = full.size() >= 3 && prim.size() >= 3 * (primitives.size() - 1);
  return {worst < 1e-3 && secs < 60.0 && seeds_ok,
          std::to_string(primitives.size() - 1) + " primitives + denoiser H=16 P=4, " + std::to_string(checked) +
              " entries, worst rel " + num(worst, 3) + " at " + where + ", " + num(secs, 3) + " s"};
}

Outcome Acceptance::schedule() {
  const NoiseSchedule s;
  double id_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto [a, sg] = alpha_sigma(s, i / 999.0);
    id_err = std::max(id_err, std::abs(a * a + sg * sg - 1.0));
  }
  RandomSource rng(101, 0);
  double rt_err = 0.0, comp_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double k = 0.01 + 0.98 * rng.uniform();
    const Tensor y0 = gaussian(rng, {12, 2}), eps = gaussian(rng, {12, 2});
    const Tensor rec = x0_from_v(q_sample(y0, k, eps, s), v_target(y0, eps, k, s), k, s);
    for (std::size_t i = 0; i < y0.size(); ++i)
      rt_err = std::max(rt_err, rel_dev(rec[i], y0[i]));
    const double k1 = k * rng.uniform(), k2 = k1 * rng.uniform();
    const Tensor y = gaussian(rng, {12, 2});
    const Tensor two = ddim_step(ddim_step(y, y0, k, k1, 0.0, s, nullptr), y0, k1, k2, 0.0, s, nullptr);
    const Tensor one = ddim_step(y, y0, k, k2, 0.0, s, nullptr);
    for (std::size_t i = 0; i < y.size(); ++i)
      comp_err = std::max(comp_err, rel_dev(two[i], one[i]));
  }
  const double k = 0.35, x0 = 1.7;
  const auto [a, sg] = alpha_sigma(s, k);
  const Tensor eps = gaussian(rng, {100000});
  const Tensor yk = q_sample(Tensor({100000}, static_cast<float>(x0)), k, eps, s);
  double mean = 0.0, sq = 0.0;
  for (float v : yk.values()) mean += v;
  mean /= yk.size();
  for (float v : yk.values()) sq += (v - mean) * (v - mean);
  const double var = sq / yk.size();
  const bool pass = id_err < 1e-12 && rt_err <= 1e-6 && comp_err <= 1e-6 && std::abs(mean - a * x0) < 0.02 &&
                    std::abs(var - sg * sg) < 0.05;
  return {pass, "identity " + num(id_err, 2) + ", v round trip " + num(rt_err, 2) + ", DDIM composition " +
                    num(comp_err, 2) + ", marginal mean " + num(mean, 5) + " vs " + num(a * x0, 5) + ", var " +
                    num(var, 5) + " vs " + num(sg * sg, 5)};
}

Outcome Acceptance::two_step_target() {
  const double t0 = now_s();
  const NoiseSchedule s;
  // (a) arbitrary teacher, 1000 rows spread over student grids.
  const VPredictor fake = [](const Tensor& y, std::span<const double> times) {
    Tensor v(y.shape());
    const std::size_t w = y.size() / y.dim(0);
    for (std::size_t r = 0; r < times.size(); ++r)
      for (std::size_t j = r * w; j < (r + 1) * w; ++j)
        v[j] = static_cast<float>(1.3 * std::sin(2.0 * y[j] + 7.0 * times[r]) + 0.2 * y[j] * times[r]);
    return v;
  };
  RandomSource rng(102, 0);
  double err_a = 0.0;
  std::size_t draws = 0;
  for (std::size_t K : {2, 4, 8, 16, 32, 64}) {
    const std::size_t rows = 1000 / 6 + 1;
    std::vector<double> ks(rows);
    for (auto& k : ks) k = static_cast<double>(rng.uniform_int(2, K)) / K;
    const Tensor y = gaussian(rng, {rows, 12, 2});
    const TwoStepTarget t = teacher_two_step_target(fake, y, ks, K, s);
    const Tensor x0 = x0_from_v_rows(y, t.v_teacher, t.k_dprime, s);
    for (std::size_t j = 0; j < y.size(); ++j)
      err_a = std::max(err_a, rel_dev(x0[j], t.y0_hat_prime[j]));
    draws += rows;
  }
  // (b) point-mass Bayes teacher at every (i, K), boundary included.
  double err_b = 0.0;
  std::size_t cells = 0, boundary = 0;
  const double c = 0.73;
  const VPredictor bayes = [&](const Tensor& y, std::span<const double> times) {
    Tensor v(y.shape());
    const std::size_t w = y.size() / y.dim(0);
    for (std::size_t r = 0; r < times.size(); ++r) {
      const AlphaSigma a = s.at(times[r]);
      for (std::size_t j = r * w; j < (r + 1) * w; ++j)
        v[j] = static_cast<float>(oracle::point_mass_v(y[j], a.alpha, a.sigma, c));
    }
    return v;
  };
  for (std::size_t K = 1; K <= 64; K *= 2) {
    std::vector<double> ks;
    for (std::size_t i = 1; i <= K; ++i) ks.push_back(static_cast<double>(i) / K);
    const Tensor y = gaussian(rng, {K, 12, 2});
    const TwoStepTarget t = teacher_two_step_target(bayes, y, ks, K, s);
    boundary += std::count(t.boundary.begin(), t.boundary.end(), 1);
    for (std::size_t j = 0; j < y.size(); ++j) {
      err_b = std::max({err_b, std::abs(t.y0_hat[j] - c), std::abs(t.y0_hat_prime[j] - c)});
    }
    cells += K;
  }
  const double secs = now_s() - t0;
  return {err_a <= 1e-6 && err_b <= 1e-6 && boundary >= 7 && secs < 30.0,
          "(a) " + std::to_string(draws) + " draws, max err " + num(err_a, 3) + "; (b) " + std::to_string(cells) +
              " (i,K) cells incl. " + std::to_string(boundary) + " boundary rows, max err " + num(err_b, 3) + "; " +
              num(secs, 3) + " s"};
}

Outcome Acceptance::loss_contracts() {
  RandomSource rng(103, 0);
  const Tensor a = gaussian(rng, {8, 12, 2}), t = gaussian(rng, {8, 12, 2}), d = gaussian(rng, {8, 12, 2});
  const double pure_t = student_loss(a, t, d, 0.0).student_total, pure_d = student_loss(a, t, d, 1.0).student_total;
  double affine = 0.0;
  for (int i = 0; i <= 20; ++i) {
    const double lambda = i / 20.0;
    affine = std::max(affine, std::abs(student_loss(a, t, d, lambda).student_total -
                                       ((1 - lambda) * pure_t + lambda * pure_d)));
  }

  // lambda = 1 against a pretraining step on the same batch at k''.
  DenoiserConfig dcfg;
  dcfg.hidden = 16;
  dcfg.context_width = 16;
  const NoiseSchedule s;
  const std::size_t B = 16, K = 32;
  DistillBatch batch;
  std::vector<double> ks(B);
  for (std::size_t r = 0; r < B; ++r) {
    const std::size_t i = rng.uniform_int(2, K);
    ks[r] = static_cast<double>(i) / K;
    batch.labels.push_back(static_cast<double>(i - 1) / K);
  }
  batch.y0 = gaussian(rng, {B, 12, 2});
  const Tensor eps = gaussian(rng, {B, 12, 2});
  batch.f = gaussian(rng, {B, 16});
  batch.y_k = q_sample_rows(batch.y0, eps, ks, s);
  batch.v_true = v_target_rows(batch.y0, eps, batch.labels, s);
  RandomSource init(104, 0);
  ParamSet teacher = init_denoiser(dcfg, init);
  const BoundDecoder bound(dcfg, teacher);
  batch.target = teacher_two_step_target(standard_predictor(bound, batch.f, 0.0, s), batch.y_k, ks, K, s);
  ParamSet p1 = init_denoiser(dcfg, init);
  const ParamSet start = p1;
  ParamSet p2 = p1;
  OptimizerState o1 = OptimizerState::for_params(p1), o2 = OptimizerState::for_params(p2);
  student_update(dcfg, p1, o1, batch, 1.0, s, 1.0);
  pretrain_update(dcfg, p2, o2, batch.y_k, batch.labels, batch.f, batch.v_true, 1.0);
  const bool bitwise = p1 == p2 && p1 != start;

  // Frozen fingerprints across pretraining with a frozen encoder and a CPD iteration.
  SyntheticSpec spec;
  spec.scenes = 4;
  spec.agents_per_scene = 3;
  std::vector<TrajectoryWindow> windows;
  for (const auto& sc : synth_generate(spec)) {
    auto w = make_windows(sc, {});
    windows.insert(windows.end(), w.begin(), w.end());
  }
  const Standardizer st = fit_standardizer(windows);
  const TrainingSet data = TrainingSet::build(windows, st);
  EncoderConfig ecfg;
  ecfg.recurrent_width = 16;
  ecfg.neighbor_width = 8;
  ecfg.output_width = 16;
  const ParamSet encoder = init_encoder(ecfg, init);
  const auto enc_print = encoder.fingerprint(), teacher_print = teacher.fingerprint();
  PretrainConfig pc;
  pc.steps = 10;
  pc.K = 8;
  pc.train_encoder = false;
  const PretrainResult pr = pretrain(dcfg, ecfg, init_denoiser(dcfg, init), encoder, data, s, pc, 1);
  DistillConfig dc;
  dc.K_start = 8;
  dc.K_target = 4;
  dc.steps_per_iteration = 10;
  dc.batch = 8;
  const DistillState in{teacher, teacher, pr.decoder, encoder, 0.0, 8, 0};
  const DistillState outstate =
      cpd_iteration({dcfg, dcfg}, in, encode_all(ecfg, encoder, data.inputs), data, s, dc, 2);
  const bool frozen = encoder.fingerprint() == enc_print && pr.encoder.fingerprint() == enc_print &&
                      outstate.encoder.fingerprint() == enc_print && in.teacher_frozen.fingerprint() == teacher_print &&
                      teacher.fingerprint() == teacher_print;
  return {affine < 1e-9 && bitwise && frozen, "affine max dev " + num(affine, 3) + ", lambda=1 step bitwise " +
                                                  (bitwise ? "equal" : "DIFFERENT") + ", frozen fingerprints " +
                                                  (frozen ? "unchanged" : "CHANGED")};
}

MetricsReport Acceptance::eval(const Model& m, std::size_t steps, std::atomic<std::size_t>* evaluations) {
  EvalOptions eo;
  eo.latency_repetitions = 0;
  eo.sampling.samples = budget_.samples;
  eo.sampling.plan = StepPlan::uniform(steps);
  eo.sampling.seed = budget_.seed;
  eo.sampling.evaluations = evaluations;
  return evaluate(m, e2e_.test, eo);
}

Outcome Acceptance::end_to_end() {
  const double t0 = now_s();
  DataConfig dc;
  SyntheticSpec spec;
  spec.seed = budget_.seed;
  dc.synthetic = spec;
  dc.test_fraction = 0.1;
  const DatasetSplits splits = load_splits(dc);
  e2e_.test.assign(splits.test.begin(), splits.test.begin() + std::min(budget_.eval_windows, splits.test.size()));
  const TrainingSet train = TrainingSet::build(splits.train, splits.standardizer);
  const NoiseSchedule sched;
  DenoiserConfig tcfg, scfg;
  tcfg.hidden = 64;
  scfg.hidden = 16;
  const EncoderConfig ecfg;
  RandomSource rng(budget_.seed, 1);
  std::ofstream log_file(out_ / "e2e_log.csv");
  ProgressLog log(&log_file, 100);

  PretrainConfig pc;
  pc.steps = budget_.teacher_steps;
  const PretrainResult tr = pretrain(tcfg, ecfg, init_denoiser(tcfg, rng), init_encoder(ecfg, rng), train, sched, pc,
                                     budget_.seed, &log);
  PretrainConfig ps = pc;
  ps.steps = budget_.student_steps;
  ps.train_encoder = false;
  const PretrainResult sr =
      pretrain(scfg, ecfg, init_denoiser(scfg, rng), tr.encoder, train, sched, ps, budget_.seed + 1, &log);
  const double pretrain_s = now_s() - t0;

  e2e_.teacher = {tcfg, tr.decoder, ecfg, tr.encoder, splits.standardizer, sched, 128, false};
  const Model student_init{scfg, sr.decoder, ecfg, tr.encoder, splits.standardizer, sched, 128, false};

  DistillConfig d;
  d.K_start = 128;
  d.K_target = 4;
  d.steps_per_iteration = budget_.distill_steps;
  const double t1 = now_s();
  const DistillResult cpd = cpd_run({tcfg, scfg}, tr.decoder, sr.decoder, ecfg, tr.encoder, train, sched, d,
                                    budget_.seed + 2, &log);
  const double cpd_s = now_s() - t1;
  e2e_.student = {scfg, cpd.state.student, ecfg, tr.encoder, splits.standardizer, sched, 4, true};
  const Model accel{tcfg, cpd.state.teacher_frozen, ecfg, tr.encoder, splits.standardizer, sched, 4, true};
  e2e_.student_ckpt = {e2e_.student, "student", cpd.history.size(), {{"command", "acceptance"}, {"seed", budget_.seed}}};
  save_checkpoint(out_ / "cpd_student_K4.ckpt", e2e_.student_ckpt);

  const double t2 = now_s();
  std::atomic<std::size_t> evals{0};
  e2e_.teacher_report = eval(e2e_.teacher, 128);
  e2e_.student_report = eval(e2e_.student, 4, &evals);
  e2e_.student_evaluations = evals;
  const double teacher_ade = e2e_.teacher_report.min_ade, student_ade = e2e_.student_report.min_ade;
  const double student_ade1 = e2e_.student_report.min_ade_at(1);
  const double eval_s = now_s() - t2;
  e2e_.seconds = now_s() - t0;
  e2e_.ran = true;

  // Reported alongside, not gated.
  table_ << "model,H,K,minADE20,minFDE20,minADE1\n";
  auto row = [&](const std::string& name, std::size_t H, std::size_t K, const MetricsReport& r) {
    table_ << name << ',' << H << ',' << K << ',' << r.min_ade << ',' << r.min_fde << ',' << r.min_ade_at(1) << '\n';
  };
  row("teacher", 64, 128, e2e_.teacher_report);
  row("cpd-student", 16, 4, e2e_.student_report);
  row("cpd-accelerated-teacher", 64, 4, eval(accel, 4));
  row("student-init-subsampled", 16, 4, eval(student_init, 4));
  row("teacher-subsampled", 64, 4, eval(e2e_.teacher, 4));
  if (!budget_.skip_pd) {
    DistillConfig pd_cfg = d;
    pd_cfg.steps_per_iteration = budget_.pd_steps;
    const DistillResult pd = pd_run(scfg, sr.decoder, ecfg, tr.encoder, train, sched, pd_cfg, budget_.seed + 3, &log);
    row("pd-student", 16, 4, eval({scfg, pd.state.student, ecfg, tr.encoder, splits.standardizer, sched, 4, true}, 4));
  }
  std::ofstream(out_ / "e2e_table.csv") << table_.str();

  const double ratio = student_ade / teacher_ade;
  const bool pass = ratio <= 1.3 && student_ade < student_ade1 && e2e_.seconds <= 1800.0;
  std::ostringstream detail;
  detail << train.size() << " train / " << e2e_.test.size() << " test windows; minADE20 student K=4 "
         << num(student_ade) << " vs teacher K=128 " << num(teacher_ade) << " (ratio " << num(ratio, 3)
         << ", gate 1.3); student minADE1 " << num(student_ade1) << "; pretrain " << num(pretrain_s, 3) << " s, cpd "
         << num(cpd_s, 3) << " s, eval " << num(eval_s, 3) << " s, total " << num(e2e_.seconds, 4) << " s";
  return {pass, detail.str()};
}

Outcome Acceptance::step_economics() {
  if (!e2e_.ran) return {false, "needs the end-to-end run"};
  const std::size_t expected = 4 * budget_.samples * e2e_.test.size();
  const bool counted = e2e_.student_evaluations == expected;

  Model big;
  big.denoiser.hidden = 256;
  RandomSource rng(105, 0);
  big.decoder = init_denoiser(big.denoiser, rng);
  big.encoder_params = init_encoder(big.encoder, rng);
  big.standardizer = e2e_.teacher.standardizer;
  const TrajectoryWindow& w = e2e_.test.front();
  const double ms4 = bench_latency(big, w, StepPlan::uniform(4), 5);
  const double ms128 = bench_latency(big, w, StepPlan::uniform(128), 3);
  const double speedup = ms128 / ms4;
  return {counted && speedup > 10.0, "K=4 evaluations " + std::to_string(e2e_.student_evaluations) + " (expected 4 x " +
                                         std::to_string(budget_.samples) + " x " + std::to_string(e2e_.test.size()) +
                                         "); H=256 latency K=4 " + num(ms4) + " ms, K=128 " + num(ms128) +
                                         " ms, speedup " + num(speedup, 3) + "x"};
}

Outcome Acceptance::size_accounting() {
  DenoiserConfig large, small;
  large.hidden = 256;
  small.hidden = 16;
  const double nl = static_cast<double>(count_params(large)), ns = static_cast<double>(count_params(small));
  const bool pass = std::abs(nl / 9043e3 - 1.0) <= 0.2 && std::abs(ns / 56e3 - 1.0) <= 0.2 && nl / ns >= 100.0;
  return {pass, "H=256 " + std::to_string(count_params(large)) + " (" + num(100 * (nl / 9043e3 - 1.0), 3) +
                    "% vs 9043K), H=16 " + std::to_string(count_params(small)) + " (" +
                    num(100 * (ns / 56e3 - 1.0), 3) + "% vs 56K), ratio " + num(nl / ns, 4)};
}

Outcome Acceptance::metrics() {
  // Hand-computed fixture: ground truth (0,0),(1,0); sample A off by 1 everywhere, sample B
  // exact then 2 off. ADE {1, 1}, FDE {1, 2}; best of both is 1 and 1.
  const Trajectory gt{{0, 0}, {1, 0}};
  PredictionSet ps;
  ps.samples = {{{0, 1}, {1, 1}}, {{0, 0}, {1, 2}}};
  const bool fixture = trajectory_ade(ps.samples[0], gt) == 1.0 && trajectory_ade(ps.samples[1], gt) == 1.0 &&
                       trajectory_fde(ps.samples[0], gt) == 1.0 && trajectory_fde(ps.samples[1], gt) == 2.0 &&
                       min_ade(ps, gt) == 1.0 && min_fde(ps, gt) == 1.0;
  if (!e2e_.ran) return {false, "fixture " + std::string(fixture ? "ok" : "WRONG") + "; needs the end-to-end run"};

  // Per-window best-of-n recomputed from the raw sample errors.
  std::size_t windows = 0, violations = 0;
  double mean_err = 0.0;
  for (const MetricsReport* r : {&e2e_.teacher_report, &e2e_.student_report}) {
    double total = 0.0;
    for (const auto& w : r->sample_ade) {
      double best = std::numeric_limits<double>::infinity();
      for (double e : w) {
        const double next = std::isnan(e) ? best : std::min(best, e);
        if (next > best) ++violations;
        best = next;
      }
      total += best;
      ++windows;
    }
    mean_err = std::max(mean_err, std::abs(total / r->sample_ade.size() - r->min_ade));
    for (std::size_t n = 2; n <= r->samples; ++n)
      if (r->min_ade_at(n) > r->min_ade_at(n - 1)) ++violations;
  }
  return {fixture && violations == 0 && mean_err < 1e-12,
          "fixture " + std::string(fixture ? "exact" : "WRONG") + "; " + std::to_string(windows) +
              " evaluated windows, " + std::to_string(violations) + " monotonicity violations; report mean matches " +
              "per-window recomputation to " + num(mean_err, 2)};
}

Outcome Acceptance::reproducibility() {
  // A reduced copy of the whole pipeline, run twice from the same (config, seed).
  auto pipeline = [](std::uint64_t seed) {
    DataConfig dc;
    SyntheticSpec spec;
    spec.scenes = 20;
    spec.agents_per_scene = 4;
    spec.seed = seed;
    dc.synthetic = spec;
    dc.test_fraction = 0.2;
    const DatasetSplits splits = load_splits(dc);
    const TrainingSet train = TrainingSet::build(splits.train, splits.standardizer);
    DenoiserConfig tcfg, scfg;
    tcfg.hidden = 16;
    tcfg.context_width = 32;
    scfg = tcfg;
    scfg.hidden = 8;
    EncoderConfig ecfg;
    ecfg.recurrent_width = 16;
    ecfg.neighbor_width = 8;
    ecfg.output_width = 32;
    const NoiseSchedule sched;
    RandomSource rng(seed, 1);
    PretrainConfig pc;
    pc.steps = 60;
    pc.K = 16;
    const PretrainResult tr = pretrain(tcfg, ecfg, init_denoiser(tcfg, rng), init_encoder(ecfg, rng), train, sched, pc, seed);
    pc.train_encoder = false;
    const PretrainResult sr = pretrain(scfg, ecfg, init_denoiser(scfg, rng), tr.encoder, train, sched, pc, seed + 1);
    DistillConfig d;
    d.K_start = 16;
    d.K_target = 4;
    d.steps_per_iteration = 20;
    const DistillResult res =
        cpd_run({tcfg, scfg}, tr.decoder, sr.decoder, ecfg, tr.encoder, train, sched, d, seed + 2);
    const Model m{scfg, res.state.student, ecfg, tr.encoder, splits.standardizer, sched, 4, true};
    EvalOptions eo;
    eo.latency_repetitions = 0;
    eo.sampling.samples = 5;
    eo.sampling.seed = seed;
    return std::pair{evaluate(m, splits.test, eo), m};
  };
  const auto [a, model] = pipeline(11);
  const MetricsReport b = pipeline(11).first;
  double dev = 0.0;
  for (std::size_t w = 0; w < a.sample_ade.size(); ++w)
    for (std::size_t j = 0; j < a.sample_ade[w].size(); ++j)
      dev = std::max({dev, std::abs(a.sample_ade[w][j] - b.sample_ade[w][j]),
                      std::abs(a.sample_fde[w][j] - b.sample_fde[w][j])});
  dev = std::max({dev, std::abs(a.min_ade - b.min_ade), std::abs(a.min_fde - b.min_fde)});
  const bool same_metrics = dev <= 1e-6 && a.sample_ade.size() == b.sample_ade.size() && std::isfinite(a.min_ade);

  // Checkpoint: encode -> decode -> encode, and file bytes after a reload-and-save.
  save_checkpoint(out_ / "repro_student.ckpt", {model, "student", 2, {{"command", "acceptance"}, {"seed", 11}}});
  const std::string bytes = read_binary_file(out_ / "repro_student.ckpt");
  save_checkpoint(out_ / "repro_student.resaved.ckpt", load_checkpoint(out_ / "repro_student.ckpt"));
  bool ckpt_bitwise = bytes == encode_checkpoint(decode_checkpoint(bytes)) &&
                      bytes == read_binary_file(out_ / "repro_student.resaved.ckpt");
  if (e2e_.ran) {
    const std::string e2e_bytes = read_binary_file(out_ / "cpd_student_K4.ckpt");
    ckpt_bitwise = ckpt_bitwise && e2e_bytes == encode_checkpoint(decode_checkpoint(e2e_bytes));
  }
  std::string diagnostic;
  std::string corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x01;
  try {
    decode_checkpoint(corrupt);
  } catch (const CheckpointError& e) {
    diagnostic = e.what();
  }

  // Dataset file: format -> parse -> format.
  SyntheticSpec spec;
  spec.scenes = 30;
  spec.seed = 12;
  const std::string csv = format_interchange(synth_generate(spec));
  write_file_atomic(out_ / "dataset.csv", csv);
  const bool data_bitwise = format_interchange(load_interchange(out_ / "dataset.csv")) == csv;

  const bool pass = same_metrics && ckpt_bitwise && data_bitwise && !diagnostic.empty();
  return {pass, "rerun max metric deviation " + num(dev, 3) + " over " + std::to_string(a.sample_ade.size()) +
                    " windows; checkpoint round trip " + (ckpt_bitwise ? "bitwise" : "DIFFERS") + "; dataset round trip " +
                    (data_bitwise ? "bitwise" : "DIFFERS") + "; corrupted byte -> \"" +
                    (diagnostic.empty() ? "ACCEPTED" : diagnostic) + "\""};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_runs";
  Budget budget;
  std::vector<int> only;
  app.add_option("--out", out, "Directory for logs, tables and checkpoints");
  app.add_option("--only", only, "Run only these criteria (5 is run too when 6 or 8 need it)")->delimiter(',');
  app.add_option("--teacher-steps", budget.teacher_steps);
  app.add_option("--student-steps", budget.student_steps);
  app.add_option("--distill-steps", budget.distill_steps);
  app.add_option("--pd-steps", budget.pd_steps);
  app.add_option("--eval-windows", budget.eval_windows);
  app.add_option("--seed", budget.seed);
  app.add_flag("--skip-pd", budget.skip_pd, "Skip the reported PD comparison");
  CLI11_PARSE(app, argc, argv);

  Acceptance acc(out, budget);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", [&] { return acc.gradients(); }},
      {"schedule and v algebra", [&] { return acc.schedule(); }},
      {"two-step target", [&] { return acc.two_step_target(); }},
      {"loss contracts", [&] { return acc.loss_contracts(); }},
      {"end-to-end distillation", [&] { return acc.end_to_end(); }},
      {"step-count economics", [&] { return acc.step_economics(); }},
      {"model-size accounting", [&] { return acc.size_accounting(); }},
      {"metric correctness", [&] { return acc.metrics(); }},
      {"reproducibility and formats", [&] { return acc.reproducibility(); }},
  };
  auto selected = [&](int n) {
    if (only.empty()) return true;
    const bool needs_e2e = n == 5 && std::any_of(only.begin(), only.end(), [](int o) { return o == 6 || o == 8; });
    return needs_e2e || std::find(only.begin(), only.end(), n) != only.end();
  };

  std::ofstream summary(fs::path(out) / "acceptance.txt");
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!selected(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << criteria[i].first << "): " << o.detail;
    std::cout << line.str() << std::endl;
    summary << line.str() << '\n';
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
