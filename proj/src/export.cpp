#include "cddm/export.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace cddm {
namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::vector<Scene> prediction_scenes(const TrajectoryWindow& window, const PredictionSet& preds) {
  const std::int64_t first = window.anchor_frame - static_cast<std::int64_t>(window.history.size()) + 1;
  std::vector<Scene> out;
  out.push_back({"observed", window.dt, {{window.agent_id, first, window.history, {}}}});
  out.push_back({"ground-truth", window.dt, {{window.agent_id, window.anchor_frame + 1, window.future, {}}}});
  for (std::size_t s = 0; s < preds.samples.size(); ++s) {
    char id[32];
    std::snprintf(id, sizeof id, "sample-%02zu", preds.stream_ids[s]);
    out.push_back({id, window.dt, {{window.agent_id, window.anchor_frame + 1, preds.samples[s], {}}}});
  }
  return out;
}

std::string format_prediction_csv(const TrajectoryWindow& window, const PredictionSet& preds) {
  return format_interchange(prediction_scenes(window, preds));
}

std::string render_svg(const TrajectoryWindow& window, const PredictionSet& preds, const std::string& config_hash) {
  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  auto extend = [&](const std::vector<Vec2>& pts) {
    for (const auto& p : pts) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
  };
  extend(window.history);
  extend(window.future);
  for (const auto& s : preds.samples) extend(s);
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1.0});
  const double size = 600.0, margin = 30.0;
  const double scale = (size - 2 * margin) / span;
  auto px = [&](const Vec2& p) {
    return fmt(margin + (p.x - lo_x) * scale) + "," + fmt(size - margin - (p.y - lo_y) * scale);
  };
  auto polyline = [&](std::vector<Vec2> pts, const char* cls, const Vec2* join) {
    if (join) pts.insert(pts.begin(), *join);
    std::string s = "  <polyline class=\"" + std::string(cls) + "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + px(pts[i]);
    return s + "\"/>\n";
  };

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  svg += "  <metadata>config_hash=" + xml_escape(config_hash) + " scene=" + xml_escape(window.scene_id) +
         " agent=" + std::to_string(window.agent_id) + " frame=" + std::to_string(window.anchor_frame) +
         " samples=" + std::to_string(preds.samples.size()) + " steps=" + std::to_string(preds.steps) +
         " sampler=" + xml_escape(preds.sampler) + "</metadata>\n";
  svg += "  <style>polyline{fill:none;stroke-linejoin:round}"
         ".observed{stroke:#222;stroke-width:3}.truth{stroke:#1a7f37;stroke-width:3;stroke-dasharray:6 4}"
         ".sample{stroke:#d1495b;stroke-width:1.2;opacity:0.6}</style>\n";
  svg += "  <rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  for (const auto& s : preds.samples) svg += polyline(s, "sample", &window.anchor);
  svg += polyline(window.history, "observed", nullptr);
  svg += polyline(window.future, "truth", &window.anchor);
  svg += "  <text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(window.scene_id) +
         " agent " + std::to_string(window.agent_id) + ", " + std::to_string(preds.samples.size()) + " samples, " +
         std::to_string(preds.steps) + " steps</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace cddm
