#pragma once

#include <string>

#include "cddm/data.hpp"
#include "cddm/eval.hpp"

namespace cddm {

// Interchange records: scene "observed" (history), "ground-truth", and "sample-<j>" per
// kept sample, all under the window's agent id and absolute frame indices.
std::vector<Scene> prediction_scenes(const TrajectoryWindow& window, const PredictionSet& preds);
std::string format_prediction_csv(const TrajectoryWindow& window, const PredictionSet& preds);

// Standalone SVG: observed polyline, one polyline per predicted sample, ground truth.
std::string render_svg(const TrajectoryWindow& window, const PredictionSet& preds, const std::string& config_hash);

}  // namespace cddm
