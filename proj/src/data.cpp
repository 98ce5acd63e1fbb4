#include "cddm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "cddm/errors.hpp"
#include "cddm/random.hpp"

namespace cddm {
namespace {

std::vector<Vec2> track_velocities(const Track& track, double dt) {
  const auto& p = track.positions;
  std::vector<Vec2> vel(p.size());
  for (std::size_t t = 1; t < p.size(); ++t) vel[t] = {(p[t].x - p[t - 1].x) / dt, (p[t].y - p[t - 1].y) / dt};
  if (p.size() >= 2) vel[0] = vel[1];
  return vel;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view text, double& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

bool parse_integral(std::string_view text, std::int64_t& out) {
  double v = 0.0;
  if (!parse_double(text, v) || std::floor(v) != v || std::fabs(v) > 9.0e15) return false;
  out = static_cast<std::int64_t>(v);
  return true;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

struct Observation {
  std::int64_t frame;
  Vec2 position;
};

// Sorted, duplicate-free observations become one or more contiguous tracks.
std::vector<Track> build_tracks(std::int64_t agent, std::vector<Observation> obs, const LoadOptions& opts) {
  std::stable_sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (obs[i].frame == obs[i - 1].frame) {
      throw DataError("non-monotone frames for agent " + std::to_string(agent) + " at frame " +
                      std::to_string(obs[i].frame));
    }
  }
  std::vector<Track> tracks;
  Track current;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (current.positions.empty()) {
      current = Track{agent, obs[i].frame, {obs[i].position}, {}};
      continue;
    }
    const std::int64_t gap = obs[i].frame - current.end();
    if (gap == 0) {
      current.positions.push_back(obs[i].position);
    } else if (gap <= static_cast<std::int64_t>(opts.max_fill_gap)) {
      const Vec2 a = current.positions.back();
      const Vec2 b = obs[i].position;
      for (std::int64_t g = 1; g <= gap; ++g) {
        const double w = static_cast<double>(g) / static_cast<double>(gap + 1);
        current.positions.push_back({a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)});
      }
      current.positions.push_back(b);
    } else {
      tracks.push_back(std::move(current));
      current = Track{agent, obs[i].frame, {obs[i].position}, {}};
    }
  }
  if (!current.positions.empty()) tracks.push_back(std::move(current));
  std::erase_if(tracks, [&](const Track& t) { return t.positions.size() < opts.min_length; });
  return tracks;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename F>
void for_each_line(const std::string& text, F&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    fn(line_no, std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
  }
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

std::vector<TrajectoryWindow> make_windows(const Scene& scene, const WindowConfig& cfg) {
  require(cfg.history >= 1 && cfg.horizon >= 1, "make_windows: history and horizon must be >= 1");
  require(cfg.stride >= 1, "make_windows: stride must be >= 1");
  const double dt = scene.dt;
  std::vector<std::vector<Vec2>> velocities;
  velocities.reserve(scene.tracks.size());
  for (const auto& track : scene.tracks) velocities.push_back(track_velocities(track, dt));

  const auto hist = static_cast<std::int64_t>(cfg.history);
  const auto pred = static_cast<std::int64_t>(cfg.horizon);
  std::vector<TrajectoryWindow> out;
  for (std::size_t ti = 0; ti < scene.tracks.size(); ++ti) {
    const Track& track = scene.tracks[ti];
    const auto len = static_cast<std::int64_t>(track.positions.size());
    const auto& vel = velocities[ti];
    for (std::int64_t a = hist - 1; a + pred < len; a += static_cast<std::int64_t>(cfg.stride)) {
      TrajectoryWindow w;
      w.scene_id = scene.id;
      w.agent_id = track.agent_id;
      w.anchor_frame = track.start + a;
      w.dt = dt;
      w.label = track.label;
      w.anchor = track.positions[a];
      for (std::int64_t t = a - hist + 1; t <= a; ++t) {
        const Vec2 p = track.positions[t];
        const Vec2 v = vel[t];
        const double speed = std::hypot(v.x, v.y);
        const double heading = speed > 0.0 ? std::atan2(v.y, v.x) : 0.0;
        w.history.push_back(p);
        for (double c : {p.x - w.anchor.x, p.y - w.anchor.y, v.x, v.y, speed, heading})
          w.ego.push_back(static_cast<float>(c));
      }
      for (std::int64_t t = a + 1; t <= a + pred; ++t) {
        w.future.push_back(track.positions[t]);
        w.future_velocity.push_back(vel[t]);
      }

      const std::int64_t first_frame = w.anchor_frame - hist + 1;
      std::vector<std::pair<double, std::size_t>> candidates;
      for (std::size_t ni = 0; ni < scene.tracks.size(); ++ni) {
        const Track& other = scene.tracks[ni];
        if (ni == ti || other.start > first_frame || other.end() <= w.anchor_frame) continue;
        const Vec2 q = other.positions[w.anchor_frame - other.start];
        const double dist = std::hypot(q.x - w.anchor.x, q.y - w.anchor.y);
        if (dist <= cfg.neighbor_radius) candidates.emplace_back(dist, ni);
      }
      std::sort(candidates.begin(), candidates.end(), [&](const auto& l, const auto& r) {
        if (l.first != r.first) return l.first < r.first;
        return scene.tracks[l.second].agent_id < scene.tracks[r.second].agent_id;
      });
      if (candidates.size() > cfg.max_neighbors) candidates.resize(cfg.max_neighbors);
      for (const auto& [dist, ni] : candidates) {
        const Track& other = scene.tracks[ni];
        std::vector<float> states;
        for (std::int64_t f = first_frame; f <= w.anchor_frame; ++f) {
          const Vec2 q = other.positions[f - other.start];
          const Vec2 qv = velocities[ni][f - other.start];
          const Vec2 p = track.positions[f - track.start];
          const Vec2 pv = vel[f - track.start];
          for (double c : {q.x - p.x, q.y - p.y, qv.x - pv.x, qv.y - pv.y}) states.push_back(static_cast<float>(c));
        }
        w.neighbors.push_back(std::move(states));
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

namespace {

struct Moments {
  std::vector<double> sum, sum_sq;
  std::size_t count = 0;
  explicit Moments(std::size_t channels) : sum(channels, 0.0), sum_sq(channels, 0.0) {}
  void add(std::span<const float> rows) {
    const std::size_t c = sum.size();
    for (std::size_t i = 0; i + c <= rows.size(); i += c) {
      for (std::size_t j = 0; j < c; ++j) {
        sum[j] += rows[i + j];
        sum_sq[j] += static_cast<double>(rows[i + j]) * rows[i + j];
      }
      ++count;
    }
  }
};

template <std::size_t N>
void finish(const Moments& m, std::array<double, N>& mean, std::array<double, N>& sd, const char* group,
            std::vector<std::string>& clamped) {
  for (std::size_t j = 0; j < N; ++j) {
    if (m.count == 0) {
      mean[j] = 0.0;
      sd[j] = 1.0;
      clamped.push_back(std::string(group) + "[" + std::to_string(j) + "]");
      continue;
    }
    const double n = static_cast<double>(m.count);
    mean[j] = m.sum[j] / n;
    const double var = std::max(0.0, m.sum_sq[j] / n - mean[j] * mean[j]);
    sd[j] = std::sqrt(var);
    if (!(sd[j] > 1e-9 * std::max(1.0, std::fabs(mean[j])))) {
      sd[j] = 1.0;
      clamped.push_back(std::string(group) + "[" + std::to_string(j) + "]");
    }
  }
}

}  // namespace

Standardizer fit_standardizer(std::span<const TrajectoryWindow> windows) {
  require(!windows.empty(), "fit_standardizer: no windows");
  Moments ego(kEgoChannels), nbr(kNeighborChannels), target(2);
  for (const auto& w : windows) {
    ego.add(w.ego);
    for (const auto& n : w.neighbors) nbr.add(n);
    std::vector<float> v;
    for (const auto& fv : w.future_velocity) {
      v.push_back(static_cast<float>(fv.x));
      v.push_back(static_cast<float>(fv.y));
    }
    target.add(v);
  }
  Standardizer s;
  finish(ego, s.ego_mean, s.ego_std, "ego", s.clamped);
  finish(nbr, s.neighbor_mean, s.neighbor_std, "neighbor", s.clamped);
  finish(target, s.target_mean, s.target_std, "target", s.clamped);
  if (!s.clamped.empty()) {
    std::cerr << "warning: zero-variance channels clamped to unit std:";
    for (const auto& c : s.clamped) std::cerr << ' ' << c;
    std::cerr << '\n';
  }
  return s;
}

void Standardizer::apply(ChannelGroup group, std::span<float> values) const {
  auto run = [values](const auto& mean, const auto& sd) {
    const std::size_t c = mean.size();
    require(values.size() % c == 0, "standardize: value count not a multiple of channel count");
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = static_cast<float>((values[i] - mean[i % c]) / sd[i % c]);
  };
  switch (group) {
    case ChannelGroup::Ego: run(ego_mean, ego_std); break;
    case ChannelGroup::Neighbor: run(neighbor_mean, neighbor_std); break;
    case ChannelGroup::Target: run(target_mean, target_std); break;
  }
}

void Standardizer::invert(ChannelGroup group, std::span<float> values) const {
  auto run = [values](const auto& mean, const auto& sd) {
    const std::size_t c = mean.size();
    require(values.size() % c == 0, "destandardize: value count not a multiple of channel count");
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = static_cast<float>(values[i] * sd[i % c] + mean[i % c]);
  };
  switch (group) {
    case ChannelGroup::Ego: run(ego_mean, ego_std); break;
    case ChannelGroup::Neighbor: run(neighbor_mean, neighbor_std); break;
    case ChannelGroup::Target: run(target_mean, target_std); break;
  }
}

EncoderBatch Standardizer::encoder_batch(std::span<const TrajectoryWindow* const> windows) const {
  require(!windows.empty(), "encoder_batch: no windows");
  const std::size_t hist = windows[0]->history_length();
  EncoderBatch batch;
  batch.ego = Tensor({windows.size(), hist, kEgoChannels});
  batch.neighbor_offsets.push_back(0);
  std::vector<float> nbr;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = *windows[b];
    require(w.history_length() == hist, "encoder_batch: windows disagree on history length");
    std::copy(w.ego.begin(), w.ego.end(), batch.ego.data() + b * hist * kEgoChannels);
    for (const auto& n : w.neighbors) nbr.insert(nbr.end(), n.begin(), n.end());
    batch.neighbor_offsets.push_back(batch.neighbor_offsets.back() + w.neighbors.size());
  }
  apply(ChannelGroup::Ego, batch.ego.values());
  apply(ChannelGroup::Neighbor, nbr);
  batch.neighbors = Tensor({batch.neighbor_offsets.back(), hist * kNeighborChannels}, std::move(nbr));
  return batch;
}

Tensor Standardizer::targets(std::span<const TrajectoryWindow* const> windows) const {
  require(!windows.empty(), "targets: no windows");
  const std::size_t pred = windows[0]->horizon();
  Tensor out({windows.size(), pred, 2});
  for (std::size_t b = 0; b < windows.size(); ++b) {
    require(windows[b]->horizon() == pred, "targets: windows disagree on horizon");
    for (std::size_t t = 0; t < pred; ++t) {
      out[(b * pred + t) * 2] = static_cast<float>(windows[b]->future_velocity[t].x);
      out[(b * pred + t) * 2 + 1] = static_cast<float>(windows[b]->future_velocity[t].y);
    }
  }
  apply(ChannelGroup::Target, out.values());
  return out;
}

Tensor Standardizer::to_velocity(const Tensor& standardized) const {
  Tensor out = standardized;
  invert(ChannelGroup::Target, out.values());
  return out;
}

std::vector<Vec2> integrate_velocity(std::span<const Vec2> velocity, Vec2 origin, double dt) {
  require(dt > 0.0, "integrate_velocity: dt must be positive");
  std::vector<Vec2> out;
  out.reserve(velocity.size());
  Vec2 p = origin;
  double sx = 0.0, sy = 0.0;
  for (const Vec2& v : velocity) {
    sx += v.x;
    sy += v.y;
    p = {origin.x + dt * sx, origin.y + dt * sy};
    out.push_back(p);
  }
  return out;
}

std::vector<Vec2> integrate_velocity(const Tensor& velocity, Vec2 origin, double dt) {
  require(velocity.rank() == 2 && velocity.dim(1) == 2, "integrate_velocity: expected [T,2] velocities");
  std::vector<Vec2> v(velocity.dim(0));
  for (std::size_t t = 0; t < v.size(); ++t) v[t] = {velocity[2 * t], velocity[2 * t + 1]};
  return integrate_velocity(v, origin, dt);
}

std::vector<Scene> parse_ethucy(const std::string& text, const std::string& scene_id, const LoadOptions& opts) {
  struct Raw {
    double frame;
    std::int64_t agent;
    Vec2 p;
  };
  std::vector<Raw> rows;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto fields = split_whitespace(line);
    if (fields.empty()) return;
    if (fields.size() != 4) throw ParseError(line_no, "expected 4 fields (frame agent x y), got " + std::to_string(fields.size()));
    Raw r{};
    if (!parse_double(fields[0], r.frame)) throw ParseError(line_no, "bad frame '" + std::string(fields[0]) + "'");
    if (!parse_integral(fields[1], r.agent)) throw ParseError(line_no, "bad agent id '" + std::string(fields[1]) + "'");
    if (!parse_double(fields[2], r.p.x) || !parse_double(fields[3], r.p.y))
      throw ParseError(line_no, "bad coordinate");
    rows.push_back(r);
  });
  if (rows.empty()) return {};

  std::map<std::int64_t, std::vector<double>> frames_by_agent;
  for (const auto& r : rows) frames_by_agent[r.agent].push_back(r.frame);
  double step = 0.0;
  double first = rows[0].frame;
  for (auto& [agent, frames] : frames_by_agent) {
    std::sort(frames.begin(), frames.end());
    for (std::size_t i = 1; i < frames.size(); ++i) {
      const double d = frames[i] - frames[i - 1];
      if (d == 0.0) {
        throw DataError("non-monotone frames for agent " + std::to_string(agent) + " at frame " +
                        std::to_string(frames[i]));
      }
      if (step == 0.0 || d < step) step = d;
    }
    first = std::min(first, frames.front());
  }
  if (step == 0.0) step = 1.0;

  std::map<std::int64_t, std::vector<Observation>> by_agent;
  for (const auto& r : rows) {
    const double idx = (r.frame - first) / step;
    const double rounded = std::round(idx);
    if (std::fabs(idx - rounded) > 1e-6) {
      throw DataError("frame " + std::to_string(r.frame) + " is not on the native frame grid");
    }
    by_agent[r.agent].push_back({static_cast<std::int64_t>(rounded), r.p});
  }
  Scene scene{scene_id, opts.dt, {}};
  for (auto& [agent, obs] : by_agent) {
    for (auto& t : build_tracks(agent, std::move(obs), opts)) scene.tracks.push_back(std::move(t));
  }
  if (scene.tracks.empty()) return {};
  return {std::move(scene)};
}

std::vector<Scene> load_ethucy(const std::filesystem::path& path, const LoadOptions& opts) {
  return parse_ethucy(read_file(path), path.stem().string(), opts);
}

std::vector<Scene> parse_interchange(const std::string& text, const LoadOptions& opts) {
  std::vector<std::string> scene_order;
  std::map<std::string, std::map<std::int64_t, std::vector<Observation>>> grouped;
  bool header_seen = false;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (trim(line).empty()) return;
    const auto fields = split_commas(line);
    if (!header_seen) {
      const std::vector<std::string_view> expected{"scene_id", "agent_id", "t_index", "x", "y"};
      if (fields != expected) throw ParseError(line_no, "missing header scene_id,agent_id,t_index,x,y");
      header_seen = true;
      return;
    }
    if (fields.size() != 5) throw ParseError(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
    std::int64_t agent = 0, t = 0;
    Vec2 p;
    if (fields[0].empty()) throw ParseError(line_no, "empty scene_id");
    if (!parse_integral(fields[1], agent)) throw ParseError(line_no, "bad agent_id");
    if (!parse_integral(fields[2], t)) throw ParseError(line_no, "bad t_index");
    if (!parse_double(fields[3], p.x) || !parse_double(fields[4], p.y)) throw ParseError(line_no, "bad coordinate");
    const std::string scene(fields[0]);
    if (!grouped.count(scene)) scene_order.push_back(scene);
    grouped[scene][agent].push_back({t, p});
  });
  if (!header_seen && !trim(text).empty()) throw ParseError(1, "missing header");
  std::vector<Scene> scenes;
  for (const auto& id : scene_order) {
    Scene scene{id, opts.dt, {}};
    for (auto& [agent, obs] : grouped[id]) {
      for (auto& t : build_tracks(agent, std::move(obs), opts)) scene.tracks.push_back(std::move(t));
    }
    if (!scene.tracks.empty()) scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<Scene> load_interchange(const std::filesystem::path& path, const LoadOptions& opts) {
  return parse_interchange(read_file(path), opts);
}

std::string format_interchange(std::span<const Scene> scenes) {
  std::string out = "scene_id,agent_id,t_index,x,y\n";
  for (const auto& scene : scenes) {
    for (const auto& track : scene.tracks) {
      for (std::size_t i = 0; i < track.positions.size(); ++i) {
        out += scene.id;
        out += ',';
        out += std::to_string(track.agent_id);
        out += ',';
        out += std::to_string(track.start + static_cast<std::int64_t>(i));
        out += ',';
        append_number(out, track.positions[i].x);
        out += ',';
        append_number(out, track.positions[i].y);
        out += '\n';
      }
    }
  }
  return out;
}

void SyntheticSpec::validate() const {
  double total = 0.0;
  for (double w : behavior_weights) {
    require(w >= 0.0, "behavior weights must be non-negative");
    total += w;
  }
  require(std::fabs(total - 1.0) < 1e-9, "behavior weights must sum to 1");
  double branch_total = 0.0;
  for (double w : branch_weights) {
    require(w >= 0.0, "branch weights must be non-negative");
    branch_total += w;
  }
  require(std::fabs(branch_total - 1.0) < 1e-9, "branch weights must sum to 1");
  require(speed_min > 0.0 && speed_max >= speed_min, "speed range must be positive and ordered");
  require(dt > 0.0 && noise >= 0.0 && extent > 0.0, "dt and extent must be positive, noise non-negative");
  require(track_length >= 2 && branch_frame + 1 < track_length, "branch frame must lie inside the track");
}

namespace {

template <std::size_t N>
std::size_t pick(RandomSource& rng, const std::array<double, N>& weights) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  for (std::size_t i = N; i-- > 0;)
    if (weights[i] > 0.0) return i;
  return 0;
}

}  // namespace

std::vector<Scene> synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<Scene> scenes;
  scenes.reserve(spec.scenes);
  for (std::size_t s = 0; s < spec.scenes; ++s) {
    RandomSource rng(spec.seed, s);
    Scene scene{"synth-" + std::to_string(s), spec.dt, {}};
    for (std::size_t a = 0; a < spec.agents_per_scene; ++a) {
      const std::size_t behavior = pick(rng, spec.behavior_weights);
      const Vec2 start{rng.uniform() * spec.extent, rng.uniform() * spec.extent};
      const double heading0 = rng.uniform() * 2.0 * std::numbers::pi;
      const double speed = spec.speed_min + rng.uniform() * (spec.speed_max - spec.speed_min);
      const double period = 2.4 + rng.uniform() * 2.4;
      const double phase = rng.uniform() * 2.0 * std::numbers::pi;
      std::size_t branch = 0;
      Track track{static_cast<std::int64_t>(a), 0, {start}, kBehaviorNames[behavior]};
      if (behavior == 4) {
        branch = pick(rng, spec.branch_weights);
        track.label = kBranchNames[branch];
      }
      Vec2 p = start;
      for (std::size_t t = 1; t < spec.track_length; ++t) {
        const double elapsed = static_cast<double>(t - 1) * spec.dt;
        double heading = heading0;
        double v = speed;
        switch (behavior) {
          case 1: heading += spec.turn_rate * elapsed; break;
          case 2: heading -= spec.turn_rate * elapsed; break;
          case 3: v = speed * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * elapsed / period + phase)); break;
          case 4:
            if (t > spec.branch_frame) {
              const double turned = spec.branch_turn_rate * static_cast<double>(t - spec.branch_frame) * spec.dt;
              heading += branch == 1 ? turned : branch == 2 ? -turned : 0.0;
            }
            break;
          default: break;
        }
        p = {p.x + spec.dt * v * std::cos(heading), p.y + spec.dt * v * std::sin(heading)};
        track.positions.push_back(p);
      }
      if (spec.noise > 0.0) {
        for (auto& q : track.positions) {
          q.x += spec.noise * rng.normal();
          q.y += spec.noise * rng.normal();
        }
      }
      scene.tracks.push_back(std::move(track));
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace cddm
