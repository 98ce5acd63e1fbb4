// cddm: synthetic data, pretraining, distillation, evaluation and export.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cddm/checkpoint.hpp"
#include "cddm/config.hpp"
#include "cddm/distill.hpp"
#include "cddm/errors.hpp"
#include "cddm/eval.hpp"
#include "cddm/export.hpp"

namespace fs = std::filesystem;
using namespace cddm;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

struct Run {
  RunConfig cfg;
  std::string hash;
  fs::path out;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run resolve(const Globals& g, const std::string& command) {
  Run run;
  run.cfg = g.config_path.empty() ? RunConfig{} : parse_run_config(read_text(g.config_path));
  if (g.seed) run.cfg.seed = *g.seed;
  if (g.out) run.cfg.out = *g.out;
  if (g.threads) run.cfg.threads = std::max<std::size_t>(1, *g.threads);
  run.hash = config_hash(run.cfg);
  run.out = run.cfg.out;
  fs::create_directories(run.out);
  Json echo = to_json(run.cfg);
  write_file_atomic(run.out / ("config." + command + ".json"), echo.dump(2) + "\n");
  std::cerr << "config hash " << run.hash << ", output " << run.out.string() << '\n';
  return run;
}

Json provenance(const Run& run, const std::string& command) {
  return {{"command", command}, {"seed", run.cfg.seed}, {"config_hash", run.hash}};
}

Checkpoint require_checkpoint(const std::string& path, const char* key) {
  if (path.empty()) throw ConfigError(std::string("config.") + key + " is required for this command");
  return load_checkpoint(path);
}

// Windows of the test split, capped to max_windows.
std::vector<TrajectoryWindow> test_windows(const RunConfig& cfg) {
  DatasetSplits splits = load_splits(cfg.data);
  std::vector<TrajectoryWindow> test = splits.test.empty() ? splits.train : splits.test;
  if (cfg.eval.max_windows > 0 && test.size() > cfg.eval.max_windows) test.resize(cfg.eval.max_windows);
  return test;
}

int cmd_synth(const Globals& g) {
  Run run = resolve(g, "synth");
  if (!run.cfg.data.synthetic) throw ConfigError("synth needs config.data.synthetic");
  const SyntheticSpec& spec = *run.cfg.data.synthetic;
  const auto scenes = synth_generate(spec);
  const std::string csv = format_interchange(scenes);
  write_file_atomic(run.out / "dataset.csv", csv);
  Json manifest = {{"format", "cddm-synthetic-manifest"},
                   {"dataset", "dataset.csv"},
                   {"dataset_hash", content_hash(Json(csv))},
                   {"scenes", scenes.size()},
                   {"spec", to_json(spec)},
                   {"seed", spec.seed},
                   {"config_hash", run.hash}};
  write_file_atomic(run.out / "manifest.json", manifest.dump(2) + "\n");
  std::size_t tracks = 0;
  for (const auto& s : scenes) tracks += s.tracks.size();
  std::cout << "wrote " << scenes.size() << " scenes, " << tracks << " tracks to " << (run.out / "dataset.csv").string()
            << '\n';
  return 0;
}

int cmd_pretrain(const Globals& g) {
  Run run = resolve(g, "pretrain");
  const RunConfig& cfg = run.cfg;
  const bool student = cfg.pretrain_model == "student";
  const DenoiserConfig dcfg = student ? cfg.student : cfg.teacher;

  DatasetSplits splits = load_splits(cfg.data);
  RandomSource rng(cfg.seed, 1);
  Model model;
  model.denoiser = dcfg;
  model.encoder = cfg.encoder;
  model.schedule = cfg.schedule;
  model.steps = cfg.pretrain.K;
  model.decoder = init_denoiser(dcfg, rng);
  model.standardizer = splits.standardizer;
  model.encoder_params = init_encoder(cfg.encoder, rng);
  PretrainConfig pc = cfg.pretrain;
  if (student) {
    // The student shares the teacher's context encoder, frozen.
    const Checkpoint teacher = require_checkpoint(cfg.teacher_checkpoint, "teacher_checkpoint");
    if (!(teacher.model.schedule == cfg.schedule)) throw ConfigError("teacher checkpoint uses a different schedule");
    model.encoder = teacher.model.encoder;
    model.encoder_params = teacher.model.encoder_params;
    model.standardizer = teacher.model.standardizer;
    pc.train_encoder = false;
  }
  const TrainingSet train = TrainingSet::build(splits.train, model.standardizer);
  std::ofstream log_file(run.out / ("pretrain_" + cfg.pretrain_model + "_log.csv"));
  ProgressLog log(&log_file, 100);
  std::cerr << "pretraining " << cfg.pretrain_model << " H=" << dcfg.hidden << " on " << train.size()
            << " windows for " << pc.steps << " steps\n";
  PretrainResult res = pretrain(dcfg, model.encoder, model.decoder, model.encoder_params, train, cfg.schedule, pc,
                                cfg.seed, &log);
  model.decoder = std::move(res.decoder);
  model.encoder_params = std::move(res.encoder);
  Checkpoint ckpt{model, "pretrained", 0, provenance(run, "pretrain")};
  ckpt.provenance["model"] = cfg.pretrain_model;
  ckpt.provenance["final_loss"] = res.final_loss;
  const fs::path path = run.out / ("pretrain_" + cfg.pretrain_model + ".ckpt");
  save_checkpoint(path, ckpt);
  std::cout << "initial loss " << res.initial_loss << ", final loss " << res.final_loss << ", wrote "
            << path.string() << '\n';
  return 0;
}

int cmd_distill(const Globals& g, const std::string& mode) {
  Run run = resolve(g, "distill");
  const RunConfig& cfg = run.cfg;
  const Checkpoint teacher = require_checkpoint(cfg.teacher_checkpoint, "teacher_checkpoint");
  if (teacher.model.steps != cfg.distill.K_start) {
    throw ConfigError("teacher checkpoint has K=" + std::to_string(teacher.model.steps) +
                      " but distill.K_start=" + std::to_string(cfg.distill.K_start));
  }
  DatasetSplits splits = load_splits(cfg.data);
  const TrainingSet train = TrainingSet::build(splits.train, teacher.model.standardizer);
  std::ofstream log_file(run.out / ("distill_" + mode + "_log.csv"));
  ProgressLog log(&log_file, 100);

  Checkpoint base = teacher;
  base.model.shifted = true;
  Json prov = provenance(run, "distill");
  prov["mode"] = mode;
  prov["distill"] = to_json(cfg.distill);

  std::ofstream summary(run.out / ("distill_" + mode + "_summary.csv"));
  summary << "config_hash,mode,iteration,K,steps_run,student_total,teacher_term,data_term,accel_loss,seconds,"
             "teacher_checkpoint,student_checkpoint\n";
  DenoiserConfig student_cfg = teacher.model.denoiser;
  auto write_iteration = [&](const IterationRecord& rec) {
    const std::string stem = mode + "_iter" + std::to_string(rec.iteration) + "_K" + std::to_string(rec.K);
    Checkpoint t = base;
    t.model.decoder = rec.teacher;
    t.model.steps = rec.K;
    t.role = "teacher";
    t.iteration = rec.iteration;
    t.provenance = prov;
    Checkpoint s = t;
    s.model.denoiser = student_cfg;
    s.model.decoder = rec.student;
    s.role = "student";
    save_checkpoint(run.out / (stem + "_teacher.ckpt"), t);
    save_checkpoint(run.out / (stem + "_student.ckpt"), s);
    summary << run.hash << ',' << mode << ',' << rec.iteration << ',' << rec.K << ',' << rec.steps_run << ','
            << rec.final_loss.student_total << ',' << rec.final_loss.teacher_term << ',' << rec.final_loss.data_term
            << ',' << rec.final_loss.accel << ',' << rec.seconds << ',' << stem << "_teacher.ckpt," << stem
            << "_student.ckpt\n"
            << std::flush;
    std::cerr << mode << " iteration " << rec.iteration << " done: K=" << rec.K << ", " << rec.steps_run
              << " steps, " << rec.seconds << " s\n";
  };

  if (mode == "cpd") {
    const Checkpoint student = require_checkpoint(cfg.student_checkpoint, "student_checkpoint");
    if (!(student.model.schedule == teacher.model.schedule))
      throw ConfigError("teacher and student checkpoints use different noise schedules");
    if (student.model.encoder_params.fingerprint() != teacher.model.encoder_params.fingerprint())
      throw ConfigError("student checkpoint was not trained on the teacher's encoder");
    student_cfg = student.model.denoiser;
    cpd_run({teacher.model.denoiser, student_cfg}, teacher.model.decoder, student.model.decoder,
            teacher.model.encoder, teacher.model.encoder_params, train, teacher.model.schedule, cfg.distill, cfg.seed,
            &log, write_iteration);
  } else {
    pd_run(teacher.model.denoiser, teacher.model.decoder, teacher.model.encoder, teacher.model.encoder_params, train,
           teacher.model.schedule, cfg.distill, cfg.seed, &log, write_iteration);
  }
  return 0;
}

StepPlan plan_for(std::size_t configured, const Checkpoint& ckpt) {
  return StepPlan::uniform(configured == 0 ? ckpt.model.steps : configured);
}

int cmd_eval(const Globals& g) {
  Run run = resolve(g, "eval");
  const RunConfig& cfg = run.cfg;
  const Checkpoint ckpt = require_checkpoint(cfg.checkpoint, "checkpoint");
  const auto windows = test_windows(cfg);
  EvalOptions opts;
  opts.sampling.plan = plan_for(cfg.eval.steps, ckpt);
  opts.sampling.samples = cfg.eval.samples;
  opts.sampling.sampler = parse_sampler(cfg.eval.sampler);
  opts.sampling.seed = cfg.seed;
  opts.sampling.threads = cfg.threads;
  opts.latency_repetitions = cfg.eval.latency_repetitions;
  opts.checkpoint_id = fs::path(cfg.checkpoint).filename().string();
  opts.config_hash = run.hash;
  const MetricsReport report = evaluate(ckpt.model, windows, opts);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  write_file_atomic(run.out / "metrics.json", report.to_json());
  write_file_atomic(run.out / "metrics.csv", MetricsReport::csv_header() + "\n" + report.csv_row() + "\n");
  std::cout << report.to_json();
  return 0;
}

int cmd_sample(const Globals& g) {
  Run run = resolve(g, "sample");
  const RunConfig& cfg = run.cfg;
  const Checkpoint ckpt = require_checkpoint(cfg.checkpoint, "checkpoint");
  DatasetSplits splits = load_splits(cfg.data);
  const TrajectoryWindow* chosen = nullptr;
  for (const auto* split : {&splits.test, &splits.train}) {
    for (const auto& w : *split) {
      if (w.scene_id == cfg.sample.scene && (cfg.sample.agent < 0 || w.agent_id == cfg.sample.agent) &&
          (cfg.sample.frame < 0 || w.anchor_frame == cfg.sample.frame)) {
        chosen = &w;
        break;
      }
    }
    if (chosen) break;
  }
  if (!chosen) {
    throw ConfigError("no window matches scene '" + cfg.sample.scene + "', agent " + std::to_string(cfg.sample.agent) +
                      ", frame " + std::to_string(cfg.sample.frame));
  }
  SamplingOptions opts;
  opts.plan = plan_for(cfg.sample.steps, ckpt);
  opts.samples = cfg.sample.samples;
  opts.sampler = parse_sampler(cfg.sample.sampler);
  opts.seed = cfg.seed;
  const std::size_t id = 0;
  auto sets = sample_predictions(ckpt.model, {&chosen, 1}, {&id, 1}, opts);
  PredictionSet& ps = sets[0];
  ps.checkpoint_id = fs::path(cfg.checkpoint).filename().string();
  write_file_atomic(run.out / "samples.csv", format_prediction_csv(*chosen, ps));
  write_file_atomic(run.out / "samples.svg", render_svg(*chosen, ps, run.hash));
  std::cout << "wrote " << ps.samples.size() << " samples (" << ps.flagged << " flagged) for scene "
            << chosen->scene_id << " agent " << chosen->agent_id << " frame " << chosen->anchor_frame << '\n';
  return 0;
}

int cmd_bench(const Globals& g, const std::vector<std::size_t>& steps) {
  Run run = resolve(g, "bench");
  const RunConfig& cfg = run.cfg;
  const Checkpoint ckpt = require_checkpoint(cfg.checkpoint, "checkpoint");
  const auto windows = test_windows(cfg);
  if (windows.empty()) throw DataError("bench: dataset has no windows");
  std::vector<std::size_t> list = steps;
  if (list.empty()) list.push_back(cfg.eval.steps == 0 ? ckpt.model.steps : cfg.eval.steps);
  Json results = Json::array();
  for (std::size_t k : list) {
    const double ms = bench_latency(ckpt.model, windows[0], StepPlan::uniform(k),
                                    std::max<std::size_t>(3, cfg.eval.latency_repetitions));
    results.push_back({{"steps", k}, {"latency_ms", ms}, {"flops", estimate_flops(ckpt.model.denoiser, k)}});
    std::cout << "steps " << k << ": " << ms << " ms\n";
  }
  Json doc = {{"checkpoint", fs::path(cfg.checkpoint).filename().string()},
              {"config_hash", run.hash},
              {"decoder_params", count_params(ckpt.model.denoiser)},
              {"results", results}};
  write_file_atomic(run.out / "bench.json", doc.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory diffusion training, progressive distillation and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  std::uint64_t seed = 0;
  std::string out;
  std::size_t threads = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides config)");
  auto* out_opt = app.add_option("--out", out, "Output directory (overrides config)");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads for evaluation");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic multimodal dataset");
  auto* pre = app.add_subcommand("pretrain", "Train a v-prediction diffusion model");
  auto* distill = app.add_subcommand("distill", "Halve sampling steps by distillation");
  std::string mode = "cpd";
  distill->add_option("--mode", mode, "cpd or pd")->check(CLI::IsMember({"cpd", "pd"}));
  auto* eval = app.add_subcommand("eval", "minADE/minFDE, params, FLOPs and latency of a checkpoint");
  auto* sample = app.add_subcommand("sample", "Export sampled futures of one window as CSV and SVG");
  auto* bench = app.add_subcommand("bench", "Median sampling latency per window");
  std::vector<std::size_t> bench_steps;
  bench->add_option("--steps", bench_steps, "Step counts to time");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count()) g.seed = seed;
  if (out_opt->count()) g.out = out;
  if (threads_opt->count()) g.threads = threads;

  try {
    if (synth->parsed()) return cmd_synth(g);
    if (pre->parsed()) return cmd_pretrain(g);
    if (distill->parsed()) return cmd_distill(g, mode);
    if (eval->parsed()) return cmd_eval(g);
    if (sample->parsed()) return cmd_sample(g);
    if (bench->parsed()) return cmd_bench(g, bench_steps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
