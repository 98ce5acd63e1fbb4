#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cddm/autodiff.hpp"
#include "cddm/params.hpp"
#include "cddm/random.hpp"

namespace cddm {

// Transformer denoiser hyperparameters. The model width is 2H; every layer is
// conditioned on [sinusoidal time embedding, context features].
struct DenoiserConfig {
  std::size_t hidden = 256;        // H
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t ff_multiplier = 2;   // feed-forward inner width = ff_multiplier * 2H
  std::size_t context_width = 256; // F
  std::size_t time_width = 0;      // 0 selects 2H
  std::size_t horizon = 12;        // P
  std::size_t point_dim = 2;

  void validate() const;
  std::size_t model_width() const { return 2 * hidden; }
  std::size_t ff_width() const { return ff_multiplier * model_width(); }
  std::size_t resolved_time_width() const { return time_width == 0 ? 2 * hidden : time_width; }
  std::size_t condition_width() const { return resolved_time_width() + context_width; }

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

// Sinusoidal embedding of a diffusion time k in [0,1]:
// [sin(w_0 s), cos(w_0 s), sin(w_1 s), cos(w_1 s), ...] with s = 1000 k, w_i = 10000^(-i/(width/2)).
Tensor embed_time(double k, std::size_t width);
// Fixed sinusoidal encoding of positions 0..count-1, shape [count, width].
Tensor positional_encoding(std::size_t count, std::size_t width);

// Context-conditioned linear layer:
//   out = (x Wx + bx) * sigmoid(ctx Wg + bg) + ctx Wb
// x holds `group` consecutive rows per context row: x[B*group, in], ctx[B, C].
Var csl_forward(const VarMap& p, const std::string& prefix, const Var& x, const Var& ctx, std::size_t group);
void init_csl(ParamSet& params, RandomSource& rng, const std::string& prefix, std::size_t in, std::size_t out,
              std::size_t cond);

ParamSet init_denoiser(const DenoiserConfig& cfg, RandomSource& rng);

// v-prediction for a batch: y[B,P,2], one time per row, f[B,F] -> [B,P,2].
Var denoise(const DenoiserConfig& cfg, const VarMap& p, const Var& y, std::span<const double> times, const Var& f);
Tensor denoise(const DenoiserConfig& cfg, const ParamSet& params, const Tensor& y, std::span<const double> times,
               const Tensor& f);

std::uint64_t count_params(const DenoiserConfig& cfg);
// 2 * multiply-accumulates of one single-window forward pass, times `sampling_steps`.
std::uint64_t estimate_flops(const DenoiserConfig& cfg, std::size_t sampling_steps);

// Context encoder: a tanh recurrent pass over the standardized ego states plus a
// mean-pooled neighbor branch, projected to the context width.
struct EncoderConfig {
  std::size_t history = 8;        // T_hist
  std::size_t state_width = 6;    // position 2, velocity 2, speed 1, heading 1
  std::size_t neighbor_state_width = 4;  // relative position 2, relative velocity 2
  std::size_t recurrent_width = 128;
  std::size_t neighbor_width = 64;
  std::size_t output_width = 256; // F

  void validate() const;
  std::size_t neighbor_input_width() const { return history * neighbor_state_width; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Standardized encoder inputs for B windows. Neighbors of window b are rows
// neighbor_offsets[b] .. neighbor_offsets[b+1] of `neighbors`.
struct EncoderBatch {
  Tensor ego;        // [B, T_hist, state_width]
  Tensor neighbors;  // [M, T_hist * neighbor_state_width]
  std::vector<std::size_t> neighbor_offsets;  // B + 1 entries

  std::size_t batch() const { return ego.empty() ? 0 : ego.dim(0); }
};

ParamSet init_encoder(const EncoderConfig& cfg, RandomSource& rng);
std::uint64_t count_encoder_params(const EncoderConfig& cfg);
std::uint64_t estimate_encoder_flops(const EncoderConfig& cfg, std::size_t neighbors);
Var encode_context(const EncoderConfig& cfg, const VarMap& p, const EncoderBatch& batch);
Tensor encode_context(const EncoderConfig& cfg, const ParamSet& params, const EncoderBatch& batch);

}  // namespace cddm
