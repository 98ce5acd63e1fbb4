#include <doctest.h>

#include <clocale>
#include <cmath>
#include <map>
#include <sstream>

#include "cddm/data.hpp"
#include "cddm/errors.hpp"
#include "cddm/random.hpp"

using namespace cddm;

namespace {

Track line_track(std::int64_t id, std::size_t length, Vec2 start, Vec2 step) {
  Track t;
  t.agent_id = id;
  for (std::size_t i = 0; i < length; ++i) t.positions.push_back({start.x + step.x * i, start.y + step.y * i});
  return t;
}

Scene scene_of(std::vector<Track> tracks) { return Scene{"scene", 0.4, std::move(tracks)}; }

std::vector<const TrajectoryWindow*> pointers(const std::vector<TrajectoryWindow>& ws) {
  std::vector<const TrajectoryWindow*> out;
  for (const auto& w : ws) out.push_back(&w);
  return out;
}

std::string eth_two_agents(std::size_t frames) {
  std::ostringstream s;
  for (std::size_t f = 0; f < frames; ++f) {
    s << f * 10 << "\t1\t" << 0.5 * f << "\t1.0\n";
    s << f * 10 << "\t2\t" << -0.3 * f << "\t" << 2.0 + 0.1 * f << "\n";
  }
  return s.str();
}

}  // namespace

TEST_CASE("window counts") {
  WindowConfig cfg;
  CHECK(make_windows(scene_of({line_track(0, 20, {0, 0}, {1, 0})}), cfg).size() == 1);
  CHECK(make_windows(scene_of({line_track(0, 22, {0, 0}, {1, 0})}), cfg).size() == 3);
  CHECK(make_windows(scene_of({line_track(0, 19, {0, 0}, {1, 0})}), cfg).empty());
  cfg.stride = 2;
  CHECK(make_windows(scene_of({line_track(0, 22, {0, 0}, {1, 0})}), cfg).size() == 2);
}

TEST_CASE("constant-velocity track has constant ego velocity and zero heading") {
  // One meter per step at dt = 0.4 s.
  const auto ws = make_windows(scene_of({line_track(0, 25, {3, -2}, {1, 0})}), {});
  for (const auto& w : ws) {
    for (std::size_t t = 0; t < w.history_length(); ++t) {
      const float* c = &w.ego[t * kEgoChannels];
      CHECK(c[2] == doctest::Approx(1.0 / 0.4));
      CHECK(c[3] == doctest::Approx(0.0));
      CHECK(c[5] == doctest::Approx(0.0));
    }
    // Relative position is zero at the anchor.
    CHECK(w.ego[(w.history_length() - 1) * kEgoChannels] == 0.0f);
  }
}

TEST_CASE("neighbors: radius, presence and ordering") {
  Scene s = scene_of({line_track(0, 20, {0, 0}, {0.1, 0}), line_track(1, 20, {0, 3}, {0.1, 0}),
                      line_track(2, 20, {0, 1}, {0.1, 0}), line_track(3, 20, {0, 9}, {0.1, 0})});
  const auto ws = make_windows(s, {});
  REQUIRE(ws.size() == 4);
  const auto& w = ws[0];
  REQUIRE(w.neighbors.size() == 2);  // agent 3 is 9 m away
  CHECK(w.neighbors[0][1] == doctest::Approx(1.0));  // nearest first: agent 2
  CHECK(w.neighbors[1][1] == doctest::Approx(3.0));
  CHECK(w.neighbors[0][2] == doctest::Approx(0.0));  // same velocity
}

TEST_CASE("standardizer: degenerate single window") {
  const auto ws = make_windows(scene_of({line_track(0, 20, {0, 0}, {0.4, 0.2})}), {});
  REQUIRE(ws.size() == 1);
  const Standardizer st = fit_standardizer(ws);
  CHECK(st.target_std[0] == 1.0);
  CHECK(st.target_std[1] == 1.0);
  CHECK(st.target_mean[0] == doctest::Approx(1.0));
  CHECK(st.target_mean[1] == doctest::Approx(0.5));
  CHECK(!st.clamped.empty());
}

TEST_CASE("standardized training set is zero-mean unit-variance and inverts exactly") {
  SyntheticSpec spec;
  spec.scenes = 30;
  spec.noise = 0.05;
  spec.seed = 3;
  std::vector<TrajectoryWindow> ws;
  for (const auto& s : synth_generate(spec))
    for (auto& w : make_windows(s, {})) ws.push_back(std::move(w));
  REQUIRE(ws.size() >= 100);
  const Standardizer st = fit_standardizer(ws);
  const auto ptrs = pointers(ws);

  const Tensor targets = st.targets(ptrs);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, sq = 0;
    const std::size_t n = targets.size() / 2;
    for (std::size_t i = 0; i < n; ++i) mean += targets[2 * i + c];
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) sq += (targets[2 * i + c] - mean) * (targets[2 * i + c] - mean);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(sq / n) - 1.0) < 1e-6);
  }
  const EncoderBatch batch = st.encoder_batch(ptrs);
  for (std::size_t c = 0; c < kEgoChannels; ++c) {
    double mean = 0, sq = 0;
    const std::size_t n = batch.ego.size() / kEgoChannels;
    for (std::size_t i = 0; i < n; ++i) mean += batch.ego[kEgoChannels * i + c];
    mean /= n;
    for (std::size_t i = 0; i < n; ++i) sq += std::pow(batch.ego[kEgoChannels * i + c] - mean, 2);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(sq / n) - 1.0) < 1e-6);
  }

  // Round trip on 100 windows' raw ego rows.
  for (std::size_t i = 0; i < 100; ++i) {
    std::vector<float> v = ws[i].ego;
    st.apply(ChannelGroup::Ego, v);
    st.invert(ChannelGroup::Ego, v);
    for (std::size_t j = 0; j < v.size(); ++j) CHECK(std::abs(v[j] - ws[i].ego[j]) < 1e-6 * std::max(1.0f, std::abs(ws[i].ego[j])));
  }
  const Tensor back = st.to_velocity(targets);
  for (std::size_t b = 0; b < 100; ++b)
    for (std::size_t t = 0; t < 12; ++t)
      CHECK(std::abs(back[(b * 12 + t) * 2] - ws[b].future_velocity[t].x) < 1e-5);
}

TEST_CASE("integrate_velocity") {
  const std::vector<Vec2> zero(5);
  for (const auto& p : integrate_velocity(zero, {1.5, -2}, 0.4)) CHECK(p == Vec2{1.5, -2});
  const std::vector<Vec2> v = {{1, 0}, {1, 0}};
  const auto p = integrate_velocity(v, {0, 0}, 0.4);
  CHECK(p[0].x == doctest::Approx(0.4));
  CHECK(p[1].x == doctest::Approx(0.8));
  CHECK(p[1].y == 0.0);
  CHECK_THROWS_AS(integrate_velocity(v, {0, 0}, 0.0), ContractViolation);
}

TEST_CASE("integrating window velocities recovers the track") {
  SyntheticSpec spec;
  spec.scenes = 5;
  spec.noise = 0.1;
  for (const auto& s : synth_generate(spec)) {
    for (const auto& w : make_windows(s, {})) {
      const auto p = integrate_velocity(w.future_velocity, w.anchor, w.dt);
      for (std::size_t t = 0; t < p.size(); ++t) {
        CHECK(std::abs(p[t].x - w.future[t].x) < 1e-5);
        CHECK(std::abs(p[t].y - w.future[t].y) < 1e-5);
      }
    }
  }
}

TEST_CASE("ethucy: empty input, two agents, fixture") {
  CHECK(parse_ethucy("", "empty").empty());
  CHECK(parse_ethucy("\n\n", "blank").empty());

  const auto scenes = parse_ethucy(eth_two_agents(25), "eth");
  REQUIRE(scenes.size() == 1);
  CHECK(scenes[0].dt == 0.4);
  CHECK(scenes[0].id == "eth");
  REQUIRE(scenes[0].tracks.size() == 2);
  CHECK(scenes[0].tracks[0].positions.size() == 25);

  const std::string fixture =
      "780.0\t1.0\t8.46\t3.59\n"
      "790.0\t1.0\t9.57\t3.79\n"
      "800.0\t1.0\t10.67\t3.99\n"
      "780.0\t2.0\t-1.25e0\t0.5\n"
      "790.0\t2.0\t-1.5\t0.75\n"
      "800.0\t2.0\t-1.75\t1\n";
  LoadOptions opts;
  opts.min_length = 1;
  const auto fx = parse_ethucy(fixture, "fx", opts);
  REQUIRE(fx.size() == 1);
  REQUIRE(fx[0].tracks.size() == 2);
  const Track& a = fx[0].tracks[0];
  const Track& b = fx[0].tracks[1];
  CHECK(a.agent_id == 1);
  CHECK(a.start == 0);
  CHECK(a.positions == std::vector<Vec2>{{8.46, 3.59}, {9.57, 3.79}, {10.67, 3.99}});
  CHECK(b.agent_id == 2);
  CHECK(b.positions == std::vector<Vec2>{{-1.25, 0.5}, {-1.5, 0.75}, {-1.75, 1.0}});
}

TEST_CASE("ethucy: short tracks dropped, gaps filled or split") {
  // Agent 1 misses one frame (filled); agent 2 misses five (split, both halves too short).
  std::ostringstream s;
  for (int f = 0; f < 30; ++f) {
    if (f != 12) s << f * 10 << " 1 " << f << " 0\n";
    if (f < 12 || f > 16) s << f * 10 << " 2 0 " << f << "\n";
  }
  const auto scenes = parse_ethucy(s.str(), "gaps");
  REQUIRE(scenes.size() == 1);
  REQUIRE(scenes[0].tracks.size() == 1);
  const Track& t = scenes[0].tracks[0];
  CHECK(t.positions.size() == 30);
  CHECK(t.positions[12].x == doctest::Approx(12.0));
}

TEST_CASE("ethucy errors") {
  try {
    parse_ethucy("0 1 0.0 0.0\n10 1 0.5\n", "bad");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_ethucy("0 1 0 0\n0 1 1 1\n", "dup"), DataError);
  CHECK_THROWS_AS(parse_ethucy("0 1 0 0\n10 1 1 1\n20 1 2 2\n0 2 0 0\n10 2 1 1\n25 2 2 2\n", "grid"), DataError);
}

TEST_CASE("parsing is locale independent") {
  const std::string text = eth_two_agents(21);
  const auto before = parse_ethucy(text, "l");
  const char* prior = std::setlocale(LC_NUMERIC, nullptr);
  const std::string saved = prior ? prior : "C";
  bool switched = false;
  for (const char* loc : {"de_DE.UTF-8", "de_DE.utf8", "fr_FR.UTF-8"})
    if (std::setlocale(LC_NUMERIC, loc)) {
      switched = true;
      break;
    }
  const auto after = parse_ethucy(text, "l");
  std::setlocale(LC_NUMERIC, saved.c_str());
  CHECK(before == after);
  if (!switched) MESSAGE("no comma-decimal locale installed; checked under the default locale only");
}

TEST_CASE("interchange round trip") {
  SyntheticSpec spec;
  spec.scenes = 4;
  spec.noise = 0.03;
  const auto scenes = synth_generate(spec);
  const std::string text = format_interchange(scenes);
  auto back = parse_interchange(text);
  REQUIRE(back.size() == scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    CHECK(back[i].id == scenes[i].id);
    REQUIRE(back[i].tracks.size() == scenes[i].tracks.size());
    for (std::size_t j = 0; j < scenes[i].tracks.size(); ++j) {
      CHECK(back[i].tracks[j].positions == scenes[i].tracks[j].positions);
      CHECK(back[i].tracks[j].start == scenes[i].tracks[j].start);
    }
  }
  CHECK(format_interchange(back) == text);
  CHECK_THROWS_AS(parse_interchange("scene,agent,t,x,y\n"), ParseError);
  CHECK(parse_interchange("").empty());
}

TEST_CASE("synthetic generation is a pure function of the spec") {
  SyntheticSpec spec;
  spec.scenes = 20;
  spec.noise = 0.02;
  spec.seed = 99;
  CHECK(synth_generate(spec) == synth_generate(spec));
  SyntheticSpec other = spec;
  other.seed = 100;
  CHECK(synth_generate(spec) != synth_generate(other));
}

TEST_CASE("straight behavior without noise has constant velocity") {
  SyntheticSpec spec;
  spec.scenes = 10;
  spec.behavior_weights = {1, 0, 0, 0, 0};
  for (const auto& s : synth_generate(spec)) {
    for (const auto& w : make_windows(s, {})) {
      const Vec2 v0 = w.future_velocity[0];
      for (const auto& v : w.future_velocity) {
        CHECK(std::abs(v.x - v0.x) < 1e-9);
        CHECK(std::abs(v.y - v0.y) < 1e-9);
      }
      for (std::size_t t = 0; t < w.history_length(); ++t) {
        CHECK(std::abs(w.ego[t * kEgoChannels + 2] - v0.x) < 1e-5);
        CHECK(std::abs(w.ego[t * kEgoChannels + 3] - v0.y) < 1e-5);
      }
    }
  }
}

TEST_CASE("branch behavior: shared prefix, three modes, balanced frequencies") {
  SyntheticSpec spec;
  spec.scenes = 300;
  spec.behavior_weights = {0, 0, 0, 0, 1};
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& s : synth_generate(spec)) {
    for (const auto& w : make_windows(s, {})) {
      ++counts[w.label];
      ++total;
    }
  }
  REQUIRE(total >= 3000);
  REQUIRE(counts.size() == 3);
  for (const char* name : kBranchNames) CHECK(std::abs(static_cast<double>(counts[name]) / total - 1.0 / 3) < 0.05);

  // Same agent parameters under each branch: identical history, distinct futures.
  SyntheticSpec one = spec;
  one.scenes = 1;
  one.agents_per_scene = 1;
  std::vector<std::vector<Vec2>> futures, histories;
  for (int mode = 0; mode < 3; ++mode) {
    one.branch_weights = {0, 0, 0};
    one.branch_weights[mode] = 1;
    const auto ws = make_windows(synth_generate(one)[0], {});
    REQUIRE(ws.size() == 1);
    histories.push_back(ws[0].history);
    futures.push_back(ws[0].future);
  }
  CHECK(histories[1] == histories[0]);
  CHECK(histories[2] == histories[0]);
  CHECK(std::hypot(futures[1].back().x - futures[2].back().x, futures[1].back().y - futures[2].back().y) > 1.0);
  CHECK(std::hypot(futures[0].back().x - futures[1].back().x, futures[0].back().y - futures[1].back().y) > 0.5);
}
