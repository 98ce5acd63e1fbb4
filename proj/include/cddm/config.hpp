#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cddm/data.hpp"
#include "cddm/distill.hpp"
#include "cddm/nets.hpp"
#include "cddm/schedule.hpp"

namespace cddm {

using Json = nlohmann::json;

struct DataConfig {
  std::optional<SyntheticSpec> synthetic;  // generate in memory instead of reading files
  std::string format = "interchange";      // interchange | ethucy
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;     // empty: hold out test_fraction of the scenes
  double test_fraction = 0.1;
  WindowConfig windows;
  LoadOptions load;
};

struct EvalConfig {
  std::size_t samples = 20;  // N
  std::size_t steps = 0;     // 0: the checkpoint's K
  std::string sampler = "ddim";
  std::size_t max_windows = 0;  // 0: every test window
  std::size_t latency_repetitions = 5;
};

struct SampleConfig {
  std::string scene;
  std::int64_t agent = -1;  // -1: first window of the scene
  std::int64_t frame = -1;  // anchor frame; -1: any
  std::size_t samples = 20;
  std::size_t steps = 0;
  std::string sampler = "ddim";
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  std::size_t threads = 1;
  DataConfig data;
  NoiseSchedule schedule;
  DenoiserConfig teacher;
  DenoiserConfig student;
  EncoderConfig encoder;
  std::string pretrain_model = "teacher";  // teacher | student
  PretrainConfig pretrain;
  DistillConfig distill;
  EvalConfig eval;
  SampleConfig sample;
  std::string checkpoint;          // eval / sample / bench input
  std::string teacher_checkpoint;  // distill input; also the frozen encoder source for student pretraining
  std::string student_checkpoint;  // cpd student initialization

  RunConfig();
};

// Strict parse: unknown keys and wrong types raise ConfigError naming the key path.
RunConfig parse_run_config(const std::string& text);
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& cfg);

// Serialized pieces shared with the checkpoint header.
Json to_json(const DenoiserConfig& cfg);
Json to_json(const EncoderConfig& cfg);
Json to_json(const NoiseSchedule& sched);
Json to_json(const Standardizer& s);
Json to_json(const SyntheticSpec& spec);
Json to_json(const DistillConfig& cfg);
DenoiserConfig denoiser_from_json(const Json& j, const std::string& path = "denoiser");
EncoderConfig encoder_from_json(const Json& j, const std::string& path = "encoder");
NoiseSchedule schedule_from_json(const Json& j, const std::string& path = "schedule");
Standardizer standardizer_from_json(const Json& j, const std::string& path = "standardizer");
SyntheticSpec synthetic_from_json(const Json& j, const std::string& path = "synthetic");
DistillConfig distill_from_json(const Json& j, const std::string& path = "distill");

// Content hash of a document, git-blob style ("blob <len>\0" + canonical JSON), 16 hex digits.
std::string content_hash(const Json& j);
std::string config_hash(const RunConfig& cfg);

struct DatasetSplits {
  std::vector<TrajectoryWindow> train;
  std::vector<TrajectoryWindow> test;
  Standardizer standardizer;  // fitted on train
};

// Windows of the configured dataset, split into train and test.
DatasetSplits load_splits(const DataConfig& cfg);
// Scene-level split: the last ceil(fraction * scenes) scenes become the test set.
void split_scenes(const std::vector<Scene>& scenes, double test_fraction, std::vector<Scene>& train,
                  std::vector<Scene>& test);

}  // namespace cddm
