#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cddm/nets.hpp"
#include "cddm/tensor.hpp"

namespace cddm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

// One agent's positions at consecutive frames start, start+1, ... of its scene.
struct Track {
  std::int64_t agent_id = 0;
  std::int64_t start = 0;
  std::vector<Vec2> positions;
  std::string label;  // generator behavior tag; empty for recorded data

  std::int64_t end() const { return start + static_cast<std::int64_t>(positions.size()); }
  friend bool operator==(const Track&, const Track&) = default;
};

struct Scene {
  std::string id;
  double dt = 0.4;
  std::vector<Track> tracks;
  friend bool operator==(const Scene&, const Scene&) = default;
};

inline constexpr std::size_t kEgoChannels = 6;       // rel. position 2, velocity 2, speed, heading
inline constexpr std::size_t kNeighborChannels = 4;  // rel. position 2, rel. velocity 2

struct WindowConfig {
  std::size_t history = 8;   // T_hist
  std::size_t horizon = 12;  // T_pred
  std::size_t stride = 1;
  double neighbor_radius = 5.0;
  std::size_t max_neighbors = 8;
};

struct TrajectoryWindow {
  std::string scene_id;
  std::int64_t agent_id = 0;
  std::int64_t anchor_frame = 0;
  double dt = 0.4;
  Vec2 anchor;                           // p0, last observed position
  std::vector<Vec2> history;             // T_hist absolute positions, oldest first
  std::vector<float> ego;                // T_hist x kEgoChannels
  std::vector<std::vector<float>> neighbors;  // each T_hist x kNeighborChannels
  std::vector<Vec2> future;              // T_pred absolute positions
  std::vector<Vec2> future_velocity;     // T_pred finite-difference velocities
  std::string label;

  std::size_t history_length() const { return history.size(); }
  std::size_t horizon() const { return future.size(); }
};

// Sliding windows over every track of the scene. Short tracks yield none.
std::vector<TrajectoryWindow> make_windows(const Scene& scene, const WindowConfig& cfg);

enum class ChannelGroup { Ego, Neighbor, Target };

// Per-channel affine standardization of encoder inputs and velocity targets.
struct Standardizer {
  std::array<double, kEgoChannels> ego_mean{};
  std::array<double, kEgoChannels> ego_std{1, 1, 1, 1, 1, 1};
  std::array<double, kNeighborChannels> neighbor_mean{};
  std::array<double, kNeighborChannels> neighbor_std{1, 1, 1, 1};
  std::array<double, 2> target_mean{};
  std::array<double, 2> target_std{1, 1};
  std::vector<std::string> clamped;  // channels whose zero variance was clamped to std 1

  // In-place on interleaved rows of the group's channel count.
  void apply(ChannelGroup group, std::span<float> values) const;
  void invert(ChannelGroup group, std::span<float> values) const;

  EncoderBatch encoder_batch(std::span<const TrajectoryWindow* const> windows) const;
  // Standardized future velocities, [B, T_pred, 2].
  Tensor targets(std::span<const TrajectoryWindow* const> windows) const;
  // Standardized [.., 2] velocities back to m/s.
  Tensor to_velocity(const Tensor& standardized) const;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

Standardizer fit_standardizer(std::span<const TrajectoryWindow> windows);

// p_t = p0 + dt * sum_{s<=t} v_s
std::vector<Vec2> integrate_velocity(std::span<const Vec2> velocity, Vec2 origin, double dt);
// [T, 2] tensor form.
std::vector<Vec2> integrate_velocity(const Tensor& velocity, Vec2 origin, double dt);

struct LoadOptions {
  double dt = 0.4;
  std::size_t min_length = 20;   // tracks shorter than this are dropped
  std::size_t max_fill_gap = 2;  // missing frames interpolated; longer gaps split the track
};

// ETH-UCY raw text: whitespace-separated frame, agent id, x, y. One Scene per file.
std::vector<Scene> load_ethucy(const std::filesystem::path& path, const LoadOptions& opts = {});
std::vector<Scene> parse_ethucy(const std::string& text, const std::string& scene_id, const LoadOptions& opts = {});

// Comma-separated interchange with header scene_id,agent_id,t_index,x,y.
std::vector<Scene> load_interchange(const std::filesystem::path& path, const LoadOptions& opts = {});
std::vector<Scene> parse_interchange(const std::string& text, const LoadOptions& opts = {});
std::string format_interchange(std::span<const Scene> scenes);

inline constexpr std::size_t kBehaviorCount = 5;
inline constexpr const char* kBehaviorNames[kBehaviorCount] = {"straight", "turn-left", "turn-right", "stop-and-go",
                                                               "branch"};
inline constexpr const char* kBranchNames[3] = {"branch-straight", "branch-left", "branch-right"};

struct SyntheticSpec {
  std::size_t scenes = 300;
  std::size_t agents_per_scene = 10;
  // straight, turn-left, turn-right, stop-and-go, 3-way branch
  std::array<double, kBehaviorCount> behavior_weights{0.1, 0.1, 0.1, 0.1, 0.6};
  std::array<double, 3> branch_weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  double speed_min = 0.8;   // m/s
  double speed_max = 1.6;
  double turn_rate = 0.25;  // rad/s for turning behaviors
  double branch_turn_rate = 0.35;
  double noise = 0.0;       // position noise std, meters
  double dt = 0.4;
  double extent = 20.0;     // scene square side, meters
  std::size_t track_length = 20;
  std::size_t branch_frame = 7;  // last shared frame before the branch modes split
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

std::vector<Scene> synth_generate(const SyntheticSpec& spec);

}  // namespace cddm
