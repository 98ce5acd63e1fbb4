#include "cddm/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "cddm/errors.hpp"

namespace cddm {
namespace {

// Reads an object's fields by name and rejects whatever is left over.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + path_ + "." + it.key() + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
void validated(T& value, const std::string& path) {
  try {
    value.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

Json to_json(const WindowConfig& w) {
  return {{"history", w.history}, {"horizon", w.horizon}, {"stride", w.stride},
          {"neighbor_radius", w.neighbor_radius}, {"max_neighbors", w.max_neighbors}};
}

WindowConfig windows_from_json(const Json& j, const std::string& path) {
  WindowConfig w;
  Fields f(j, path);
  f.get("history", w.history);
  f.get("horizon", w.horizon);
  f.get("stride", w.stride);
  f.get("neighbor_radius", w.neighbor_radius);
  f.get("max_neighbors", w.max_neighbors);
  f.finish();
  if (w.history < 1 || w.horizon < 1 || w.stride < 1) throw ConfigError(path + ": history, horizon, stride must be >= 1");
  return w;
}

Json to_json(const LoadOptions& o) {
  return {{"dt", o.dt}, {"min_length", o.min_length}, {"max_fill_gap", o.max_fill_gap}};
}

LoadOptions load_from_json(const Json& j, const std::string& path) {
  LoadOptions o;
  Fields f(j, path);
  f.get("dt", o.dt);
  f.get("min_length", o.min_length);
  f.get("max_fill_gap", o.max_fill_gap);
  f.finish();
  if (!(o.dt > 0.0)) throw ConfigError(path + ".dt must be positive");
  return o;
}

Json to_json(const PretrainConfig& p) {
  return {{"steps", p.steps}, {"batch", p.batch}, {"K", p.K}, {"lr", p.lr}, {"weight_decay", p.weight_decay},
          {"ema_decay", p.ema_decay}, {"grad_clip", p.grad_clip}};
}

PretrainConfig pretrain_from_json(const Json& j, const std::string& path) {
  PretrainConfig p;
  Fields f(j, path);
  f.get("steps", p.steps);
  f.get("batch", p.batch);
  f.get("K", p.K);
  f.get("lr", p.lr);
  f.get("weight_decay", p.weight_decay);
  f.get("ema_decay", p.ema_decay);
  f.get("grad_clip", p.grad_clip);
  f.finish();
  validated(p, path);
  return p;
}

Json to_json(const EvalConfig& e) {
  return {{"samples", e.samples}, {"steps", e.steps}, {"sampler", e.sampler}, {"max_windows", e.max_windows},
          {"latency_repetitions", e.latency_repetitions}};
}

Json to_json(const SampleConfig& s) {
  return {{"scene", s.scene}, {"agent", s.agent}, {"frame", s.frame}, {"samples", s.samples}, {"steps", s.steps},
          {"sampler", s.sampler}};
}

void check_sampler(const std::string& name, const std::string& path) {
  if (name != "ddim" && name != "ancestral") throw ConfigError(path + ": sampler must be ddim or ancestral");
}

}  // namespace

RunConfig::RunConfig() {
  teacher.hidden = 64;
  student.hidden = 16;
}

Json to_json(const DenoiserConfig& c) {
  return {{"hidden", c.hidden}, {"layers", c.layers}, {"heads", c.heads}, {"ff_multiplier", c.ff_multiplier},
          {"context_width", c.context_width}, {"time_width", c.time_width}, {"horizon", c.horizon},
          {"point_dim", c.point_dim}};
}

DenoiserConfig denoiser_from_json(const Json& j, const std::string& path) {
  DenoiserConfig c;
  Fields f(j, path);
  f.get("hidden", c.hidden);
  f.get("layers", c.layers);
  f.get("heads", c.heads);
  f.get("ff_multiplier", c.ff_multiplier);
  f.get("context_width", c.context_width);
  f.get("time_width", c.time_width);
  f.get("horizon", c.horizon);
  f.get("point_dim", c.point_dim);
  f.finish();
  validated(c, path);
  return c;
}

Json to_json(const EncoderConfig& c) {
  return {{"history", c.history}, {"state_width", c.state_width}, {"neighbor_state_width", c.neighbor_state_width},
          {"recurrent_width", c.recurrent_width}, {"neighbor_width", c.neighbor_width},
          {"output_width", c.output_width}};
}

EncoderConfig encoder_from_json(const Json& j, const std::string& path) {
  EncoderConfig c;
  Fields f(j, path);
  f.get("history", c.history);
  f.get("state_width", c.state_width);
  f.get("neighbor_state_width", c.neighbor_state_width);
  f.get("recurrent_width", c.recurrent_width);
  f.get("neighbor_width", c.neighbor_width);
  f.get("output_width", c.output_width);
  f.finish();
  validated(c, path);
  return c;
}

Json to_json(const NoiseSchedule& s) {
  Json j = {{"alpha_start", s.alpha_start}, {"alpha_end", s.alpha_end}, {"sigma_floor", s.sigma_floor}};
  if (!s.knots.empty()) {
    Json knots = Json::array();
    for (const auto& [k, a] : s.knots) knots.push_back({k, a});
    j["knots"] = knots;
  }
  return j;
}

NoiseSchedule schedule_from_json(const Json& j, const std::string& path) {
  NoiseSchedule s;
  Fields f(j, path);
  f.get("alpha_start", s.alpha_start);
  f.get("alpha_end", s.alpha_end);
  f.get("sigma_floor", s.sigma_floor);
  std::vector<std::pair<double, double>> knots;
  f.get("knots", knots);
  f.finish();
  if (!knots.empty()) {
    const double floor = s.sigma_floor;
    s = NoiseSchedule::piecewise(knots);
    s.sigma_floor = floor;
  }
  validated(s, path);
  return s;
}

Json to_json(const Standardizer& s) {
  return {{"ego_mean", s.ego_mean}, {"ego_std", s.ego_std}, {"neighbor_mean", s.neighbor_mean},
          {"neighbor_std", s.neighbor_std}, {"target_mean", s.target_mean}, {"target_std", s.target_std},
          {"clamped", s.clamped}};
}

Standardizer standardizer_from_json(const Json& j, const std::string& path) {
  Standardizer s;
  Fields f(j, path);
  f.get("ego_mean", s.ego_mean);
  f.get("ego_std", s.ego_std);
  f.get("neighbor_mean", s.neighbor_mean);
  f.get("neighbor_std", s.neighbor_std);
  f.get("target_mean", s.target_mean);
  f.get("target_std", s.target_std);
  f.get("clamped", s.clamped);
  f.finish();
  return s;
}

Json to_json(const SyntheticSpec& s) {
  return {{"scenes", s.scenes}, {"agents_per_scene", s.agents_per_scene}, {"behavior_weights", s.behavior_weights},
          {"branch_weights", s.branch_weights}, {"speed_min", s.speed_min}, {"speed_max", s.speed_max},
          {"turn_rate", s.turn_rate}, {"branch_turn_rate", s.branch_turn_rate}, {"noise", s.noise}, {"dt", s.dt},
          {"extent", s.extent}, {"track_length", s.track_length}, {"branch_frame", s.branch_frame},
          {"seed", s.seed}};
}

SyntheticSpec synthetic_from_json(const Json& j, const std::string& path) {
  SyntheticSpec s;
  Fields f(j, path);
  f.get("scenes", s.scenes);
  f.get("agents_per_scene", s.agents_per_scene);
  f.get("behavior_weights", s.behavior_weights);
  f.get("branch_weights", s.branch_weights);
  f.get("speed_min", s.speed_min);
  f.get("speed_max", s.speed_max);
  f.get("turn_rate", s.turn_rate);
  f.get("branch_turn_rate", s.branch_turn_rate);
  f.get("noise", s.noise);
  f.get("dt", s.dt);
  f.get("extent", s.extent);
  f.get("track_length", s.track_length);
  f.get("branch_frame", s.branch_frame);
  f.get("seed", s.seed);
  f.finish();
  validated(s, path);
  return s;
}

Json to_json(const DistillConfig& c) {
  return {{"lambda", c.lambda}, {"K_start", c.K_start}, {"K_target", c.K_target},
          {"steps_per_iteration", c.steps_per_iteration}, {"batch", c.batch}, {"lr", c.lr},
          {"accel_lr", c.accel_lr}, {"weight_decay", c.weight_decay}, {"ema_decay", c.ema_decay},
          {"grad_clip", c.grad_clip}, {"plateau_window", c.plateau_window},
          {"plateau_tolerance", c.plateau_tolerance}, {"disable_acceleration", c.disable_acceleration},
          {"disable_compression", c.disable_compression},
          {"disable_data_regularization", c.disable_data_regularization},
          {"disable_weight_initialization", c.disable_weight_initialization}};
}

DistillConfig distill_from_json(const Json& j, const std::string& path) {
  DistillConfig c;
  Fields f(j, path);
  f.get("lambda", c.lambda);
  f.get("K_start", c.K_start);
  f.get("K_target", c.K_target);
  f.get("steps_per_iteration", c.steps_per_iteration);
  f.get("batch", c.batch);
  f.get("lr", c.lr);
  f.get("accel_lr", c.accel_lr);
  f.get("weight_decay", c.weight_decay);
  f.get("ema_decay", c.ema_decay);
  f.get("grad_clip", c.grad_clip);
  f.get("plateau_window", c.plateau_window);
  f.get("plateau_tolerance", c.plateau_tolerance);
  f.get("disable_acceleration", c.disable_acceleration);
  f.get("disable_compression", c.disable_compression);
  f.get("disable_data_regularization", c.disable_data_regularization);
  f.get("disable_weight_initialization", c.disable_weight_initialization);
  f.finish();
  validated(c, path);
  return c;
}

Json to_json(const RunConfig& c) {
  Json data = {{"format", c.data.format}, {"train_files", c.data.train_files}, {"test_files", c.data.test_files},
               {"test_fraction", c.data.test_fraction}, {"windows", to_json(c.data.windows)},
               {"load", to_json(c.data.load)}};
  if (c.data.synthetic) data["synthetic"] = to_json(*c.data.synthetic);
  return {{"seed", c.seed},
          {"out", c.out},
          {"threads", c.threads},
          {"data", data},
          {"schedule", to_json(c.schedule)},
          {"teacher", to_json(c.teacher)},
          {"student", to_json(c.student)},
          {"encoder", to_json(c.encoder)},
          {"pretrain_model", c.pretrain_model},
          {"pretrain", to_json(c.pretrain)},
          {"distill", to_json(c.distill)},
          {"eval", to_json(c.eval)},
          {"sample", to_json(c.sample)},
          {"checkpoint", c.checkpoint},
          {"teacher_checkpoint", c.teacher_checkpoint},
          {"student_checkpoint", c.student_checkpoint}};
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  Fields f(j, "config");
  f.get("seed", c.seed);
  f.get("out", c.out);
  f.get("threads", c.threads);
  if (const Json* d = f.child("data")) {
    Fields df(*d, "config.data");
    if (const Json* s = df.child("synthetic")) {
      if (!s->is_null()) c.data.synthetic = synthetic_from_json(*s, "config.data.synthetic");
    }
    df.get("format", c.data.format);
    df.get("train_files", c.data.train_files);
    df.get("test_files", c.data.test_files);
    df.get("test_fraction", c.data.test_fraction);
    if (const Json* w = df.child("windows")) c.data.windows = windows_from_json(*w, "config.data.windows");
    if (const Json* l = df.child("load")) c.data.load = load_from_json(*l, "config.data.load");
    df.finish();
    if (c.data.format != "interchange" && c.data.format != "ethucy")
      throw ConfigError("config.data.format must be interchange or ethucy");
    if (c.data.test_fraction < 0.0 || c.data.test_fraction >= 1.0)
      throw ConfigError("config.data.test_fraction must lie in [0,1)");
  }
  if (const Json* s = f.child("schedule")) c.schedule = schedule_from_json(*s, "config.schedule");
  if (const Json* t = f.child("teacher")) c.teacher = denoiser_from_json(*t, "config.teacher");
  if (const Json* s = f.child("student")) c.student = denoiser_from_json(*s, "config.student");
  if (const Json* e = f.child("encoder")) c.encoder = encoder_from_json(*e, "config.encoder");
  f.get("pretrain_model", c.pretrain_model);
  if (c.pretrain_model != "teacher" && c.pretrain_model != "student")
    throw ConfigError("config.pretrain_model must be teacher or student");
  if (const Json* p = f.child("pretrain")) c.pretrain = pretrain_from_json(*p, "config.pretrain");
  if (const Json* d = f.child("distill")) c.distill = distill_from_json(*d, "config.distill");
  if (const Json* e = f.child("eval")) {
    Fields ef(*e, "config.eval");
    ef.get("samples", c.eval.samples);
    ef.get("steps", c.eval.steps);
    ef.get("sampler", c.eval.sampler);
    ef.get("max_windows", c.eval.max_windows);
    ef.get("latency_repetitions", c.eval.latency_repetitions);
    ef.finish();
    check_sampler(c.eval.sampler, "config.eval");
    if (c.eval.samples < 1) throw ConfigError("config.eval.samples must be >= 1");
  }
  if (const Json* s = f.child("sample")) {
    Fields sf(*s, "config.sample");
    sf.get("scene", c.sample.scene);
    sf.get("agent", c.sample.agent);
    sf.get("frame", c.sample.frame);
    sf.get("samples", c.sample.samples);
    sf.get("steps", c.sample.steps);
    sf.get("sampler", c.sample.sampler);
    sf.finish();
    check_sampler(c.sample.sampler, "config.sample");
  }
  f.get("checkpoint", c.checkpoint);
  f.get("teacher_checkpoint", c.teacher_checkpoint);
  f.get("student_checkpoint", c.student_checkpoint);
  f.finish();
  if (c.teacher.horizon != c.data.windows.horizon || c.student.horizon != c.data.windows.horizon)
    throw ConfigError("config: teacher/student horizon must equal data.windows.horizon");
  if (c.encoder.history != c.data.windows.history)
    throw ConfigError("config: encoder.history must equal data.windows.history");
  if (c.teacher.context_width != c.encoder.output_width || c.student.context_width != c.encoder.output_width)
    throw ConfigError("config: decoder context_width must equal encoder.output_width");
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

std::string content_hash(const Json& j) {
  const std::string body = j.dump();
  const std::string blob = "blob " + std::to_string(body.size()) + std::string(1, '\0') + body;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : blob) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& cfg) { return content_hash(to_json(cfg)); }

void split_scenes(const std::vector<Scene>& scenes, double test_fraction, std::vector<Scene>& train,
                  std::vector<Scene>& test) {
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(scenes.size())));
  const std::size_t n_train = scenes.size() - std::min(n_test, scenes.size());
  train.assign(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.assign(scenes.begin() + static_cast<std::ptrdiff_t>(n_train), scenes.end());
}

DatasetSplits load_splits(const DataConfig& cfg) {
  auto load = [&](const std::vector<std::string>& files) {
    std::vector<Scene> scenes;
    for (const auto& file : files) {
      auto part = cfg.format == "ethucy" ? load_ethucy(file, cfg.load) : load_interchange(file, cfg.load);
      scenes.insert(scenes.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return scenes;
  };
  std::vector<Scene> train, test;
  if (cfg.synthetic) {
    split_scenes(synth_generate(*cfg.synthetic), cfg.test_fraction, train, test);
  } else if (cfg.test_files.empty()) {
    if (cfg.train_files.empty()) throw ConfigError("config.data: no synthetic spec and no train_files");
    split_scenes(load(cfg.train_files), cfg.test_fraction, train, test);
  } else {
    train = load(cfg.train_files);
    test = load(cfg.test_files);
  }
  DatasetSplits out;
  for (const auto& s : train) {
    auto w = make_windows(s, cfg.windows);
    out.train.insert(out.train.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  for (const auto& s : test) {
    auto w = make_windows(s, cfg.windows);
    out.test.insert(out.test.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  if (out.train.empty()) throw DataError("dataset produced no training windows");
  out.standardizer = fit_standardizer(out.train);
  return out;
}

}  // namespace cddm
