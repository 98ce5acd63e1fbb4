#include "cddm/nets.hpp"

#include <cmath>

#include "cddm/errors.hpp"

namespace cddm {

void DenoiserConfig::validate() const {
  require(hidden >= 2 && hidden % 2 == 0, "denoiser hidden width H must be even and >= 2");
  require(layers >= 1 && heads >= 1, "denoiser needs at least one layer and one head");
  require(model_width() % heads == 0, "model width 2H must be divisible by the head count");
  require(ff_multiplier >= 1, "feed-forward multiplier must be >= 1");
  require(horizon >= 1, "prediction horizon must be >= 1");
  require(context_width >= 1 && point_dim >= 1, "context and point widths must be positive");
  require(resolved_time_width() % 2 == 0, "time embedding width must be even");
}

Tensor embed_time(double k, std::size_t width) {
  require(width % 2 == 0 && width > 0, "embed_time: width must be even and positive");
  const std::size_t half = width / 2;
  const double scaled = 1000.0 * k;
  Tensor out({width});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = static_cast<float>(std::sin(scaled * freq));
    out[2 * i + 1] = static_cast<float>(std::cos(scaled * freq));
  }
  return out;
}

Tensor positional_encoding(std::size_t count, std::size_t width) {
  Tensor out({count, width});
  for (std::size_t pos = 0; pos < count; ++pos) {
    for (std::size_t j = 0; j < width; ++j) {
      const double i2 = static_cast<double>(j - j % 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, i2 / static_cast<double>(width));
      out[pos * width + j] = static_cast<float>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return out;
}

Var csl_forward(const VarMap& p, const std::string& prefix, const Var& x, const Var& ctx, std::size_t group) {
  const Var& wx = p[prefix + ".wx"];
  const Var& wg = p[prefix + ".wg"];
  const Var& wb = p[prefix + ".wb"];
  require(x.shape().back() == wx.dim(0), "csl_forward: input width " + std::to_string(x.shape().back()) +
                                             " does not match layer width " + std::to_string(wx.dim(0)));
  require(ctx.value().rank() == 2 && ctx.dim(1) == wg.dim(0), "csl_forward: context width mismatch");
  require(x.size() / x.shape().back() == ctx.dim(0) * group, "csl_forward: rows do not match context groups");
  Var lin = ops::add_bias(ops::matmul(x, wx), p[prefix + ".bx"]);
  Var gate = ops::sigmoid(ops::add_bias(ops::matmul(ctx, wg), p[prefix + ".bg"]));
  Var shift = ops::matmul(ctx, wb);
  if (group != 1) {
    gate = ops::repeat_rows(gate, group);
    shift = ops::repeat_rows(shift, group);
  }
  return ops::add(ops::mul(lin, gate), shift);
}

void init_csl(ParamSet& params, RandomSource& rng, const std::string& prefix, std::size_t in, std::size_t out,
              std::size_t cond) {
  params.set(prefix + ".wx", init_weight(rng, in, out));
  params.set(prefix + ".bx", Tensor({out}));
  params.set(prefix + ".wg", init_weight(rng, cond, out));
  params.set(prefix + ".bg", Tensor({out}));
  params.set(prefix + ".wb", init_weight(rng, cond, out));
}

namespace {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

const char* const kHeads[] = {"head0", "head1", "head2"};

std::vector<std::size_t> head_widths(const DenoiserConfig& cfg) {
  return {cfg.model_width(), cfg.hidden, cfg.hidden / 2, cfg.point_dim};
}

Var linear(const VarMap& p, const std::string& prefix, const Var& x) {
  return ops::add_bias(ops::matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

void init_linear(ParamSet& params, RandomSource& rng, const std::string& prefix, std::size_t in, std::size_t out) {
  params.set(prefix + ".w", init_weight(rng, in, out));
  params.set(prefix + ".b", Tensor({out}));
}

// [B*P, d] -> [B*heads, P, d/heads]
Var split_heads(const Var& x, std::size_t batch, std::size_t positions, std::size_t heads) {
  const std::size_t dh = x.shape().back() / heads;
  Var r = ops::reshape(x, {batch, positions, heads, dh});
  return ops::reshape(ops::swap_middle_axes(r), {batch * heads, positions, dh});
}

Var merge_heads(const Var& x, std::size_t batch, std::size_t positions, std::size_t heads) {
  const std::size_t dh = x.shape().back();
  Var r = ops::reshape(x, {batch, heads, positions, dh});
  return ops::reshape(ops::swap_middle_axes(r), {batch * positions, heads * dh});
}

Var encoder_layer(const DenoiserConfig& cfg, const VarMap& p, const std::string& prefix, const Var& h,
                  std::size_t batch) {
  const std::size_t d = cfg.model_width();
  const std::size_t positions = cfg.horizon;
  const std::size_t dh = d / cfg.heads;
  Var qkv = linear(p, prefix + ".qkv", h);
  Var q = split_heads(ops::slice(qkv, 1, 0, d), batch, positions, cfg.heads);
  Var k = split_heads(ops::slice(qkv, 1, d, 2 * d), batch, positions, cfg.heads);
  Var v = split_heads(ops::slice(qkv, 1, 2 * d, 3 * d), batch, positions, cfg.heads);
  Var scores = ops::scale(ops::bmm(q, k, true), static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh))));
  Var attended = merge_heads(ops::bmm(ops::softmax(scores), v), batch, positions, cfg.heads);
  Var x = ops::layer_norm(ops::add(h, linear(p, prefix + ".out", attended)), p[prefix + ".ln1.g"], p[prefix + ".ln1.b"]);
  Var ff = linear(p, prefix + ".ff2", ops::relu(linear(p, prefix + ".ff1", x)));
  return ops::layer_norm(ops::add(x, ff), p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]);
}

}  // namespace

ParamSet init_denoiser(const DenoiserConfig& cfg, RandomSource& rng) {
  cfg.validate();
  const std::size_t d = cfg.model_width();
  const std::size_t cond = cfg.condition_width();
  ParamSet params;
  init_csl(params, rng, "in", cfg.point_dim, d, cond);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string pre = layer_prefix(l);
    init_linear(params, rng, pre + ".qkv", d, 3 * d);
    init_linear(params, rng, pre + ".out", d, d);
    init_linear(params, rng, pre + ".ff1", d, cfg.ff_width());
    init_linear(params, rng, pre + ".ff2", cfg.ff_width(), d);
    for (const char* ln : {".ln1", ".ln2"}) {
      params.set(pre + ln + ".g", Tensor({d}, 1.0f));
      params.set(pre + ln + ".b", Tensor({d}));
    }
  }
  const auto widths = head_widths(cfg);
  for (std::size_t i = 0; i < 3; ++i) init_csl(params, rng, kHeads[i], widths[i], widths[i + 1], cond);
  return params;
}

Var denoise(const DenoiserConfig& cfg, const VarMap& p, const Var& y, std::span<const double> times, const Var& f) {
  const std::size_t batch = y.dim(0);
  require(y.value().rank() == 3 && y.dim(1) == cfg.horizon && y.dim(2) == cfg.point_dim,
          "denoise: expected y of shape [B," + std::to_string(cfg.horizon) + "," + std::to_string(cfg.point_dim) +
              "], got " + shape_string(y.shape()));
  require(times.size() == batch, "denoise: one time per batch row required");
  require(f.value().rank() == 2 && f.dim(0) == batch && f.dim(1) == cfg.context_width,
          "denoise: context must be [B," + std::to_string(cfg.context_width) + "]");

  const std::size_t tw = cfg.resolved_time_width();
  Tensor temb({batch, tw});
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor e = embed_time(times[b], tw);
    std::copy(e.values().begin(), e.values().end(), temb.data() + b * tw);
  }
  const Var ctx = ops::concat({constant(std::move(temb)), f}, 1);

  const std::size_t d = cfg.model_width();
  const std::size_t rows = batch * cfg.horizon;
  const Tensor pe = positional_encoding(cfg.horizon, d);
  Tensor pe_rows({rows, d});
  for (std::size_t b = 0; b < batch; ++b) std::copy(pe.values().begin(), pe.values().end(), pe_rows.data() + b * pe.size());

  Var h = csl_forward(p, "in", ops::reshape(y, {rows, cfg.point_dim}), ctx, cfg.horizon);
  h = ops::add(h, constant(std::move(pe_rows)));
  for (std::size_t l = 0; l < cfg.layers; ++l) h = encoder_layer(cfg, p, layer_prefix(l), h, batch);
  for (const char* head : kHeads) h = csl_forward(p, head, h, ctx, cfg.horizon);
  Var out = ops::reshape(h, {batch, cfg.horizon, cfg.point_dim});
  if (!out.value().all_finite()) throw NumericOverflow("denoise", "denoiser produced non-finite activations");
  return out;
}

Tensor denoise(const DenoiserConfig& cfg, const ParamSet& params, const Tensor& y, std::span<const double> times,
               const Tensor& f) {
  const VarMap bound(params, false);
  return denoise(cfg, bound, constant(y), times, constant(f)).value();
}

std::uint64_t count_params(const DenoiserConfig& cfg) {
  cfg.validate();
  const std::uint64_t d = cfg.model_width();
  const std::uint64_t ff = cfg.ff_width();
  const std::uint64_t cond = cfg.condition_width();
  auto csl = [cond](std::uint64_t in, std::uint64_t out) { return in * out + out + cond * out + out + cond * out; };
  auto lin = [](std::uint64_t in, std::uint64_t out) { return in * out + out; };
  const std::uint64_t layer = lin(d, 3 * d) + lin(d, d) + lin(d, ff) + lin(ff, d) + 4 * d;
  const auto widths = head_widths(cfg);
  std::uint64_t total = csl(cfg.point_dim, d) + cfg.layers * layer;
  for (std::size_t i = 0; i < 3; ++i) total += csl(widths[i], widths[i + 1]);
  return total;
}

std::uint64_t estimate_flops(const DenoiserConfig& cfg, std::size_t sampling_steps) {
  cfg.validate();
  const std::uint64_t p = cfg.horizon;
  const std::uint64_t d = cfg.model_width();
  const std::uint64_t ff = cfg.ff_width();
  const std::uint64_t cond = cfg.condition_width();
  // Conditioning terms (gate and shift) are evaluated once per window, the input map once per position.
  auto csl = [p, cond](std::uint64_t in, std::uint64_t out) { return p * in * out + 2 * cond * out; };
  const std::uint64_t attention = p * d * 3 * d + 2 * p * p * d + p * d * d;
  const std::uint64_t feed_forward = 2 * p * d * ff;
  const auto widths = head_widths(cfg);
  std::uint64_t macs = csl(cfg.point_dim, d) + cfg.layers * (attention + feed_forward);
  for (std::size_t i = 0; i < 3; ++i) macs += csl(widths[i], widths[i + 1]);
  return 2 * macs * sampling_steps;
}

void EncoderConfig::validate() const {
  require(history >= 1, "encoder history length must be >= 1");
  require(state_width >= 1 && neighbor_state_width >= 1, "encoder state widths must be positive");
  require(recurrent_width >= 1 && neighbor_width >= 1 && output_width >= 1, "encoder widths must be positive");
}

ParamSet init_encoder(const EncoderConfig& cfg, RandomSource& rng) {
  cfg.validate();
  ParamSet params;
  params.set("rnn.wx", init_weight(rng, cfg.state_width, cfg.recurrent_width));
  params.set("rnn.wh", init_weight(rng, cfg.recurrent_width, cfg.recurrent_width));
  params.set("rnn.b", Tensor({cfg.recurrent_width}));
  init_linear(params, rng, "nbr.embed", cfg.neighbor_input_width(), cfg.neighbor_width);
  init_linear(params, rng, "nbr.pool", cfg.neighbor_width, cfg.neighbor_width);
  init_linear(params, rng, "out", cfg.recurrent_width + cfg.neighbor_width, cfg.output_width);
  return params;
}

std::uint64_t count_encoder_params(const EncoderConfig& cfg) {
  const std::uint64_t r = cfg.recurrent_width;
  const std::uint64_t n = cfg.neighbor_width;
  return cfg.state_width * r + r * r + r + (cfg.neighbor_input_width() * n + n) + (n * n + n) +
         ((r + n) * cfg.output_width + cfg.output_width);
}

std::uint64_t estimate_encoder_flops(const EncoderConfig& cfg, std::size_t neighbors) {
  const std::uint64_t r = cfg.recurrent_width;
  const std::uint64_t n = cfg.neighbor_width;
  const std::uint64_t macs = cfg.history * (cfg.state_width * r + r * r) + neighbors * cfg.neighbor_input_width() * n +
                             n * n + (r + n) * cfg.output_width;
  return 2 * macs;
}

Var encode_context(const EncoderConfig& cfg, const VarMap& p, const EncoderBatch& batch) {
  const std::size_t b = batch.batch();
  require(b > 0, "encode_context: empty batch");
  require(batch.ego.rank() == 3 && batch.ego.dim(1) == cfg.history && batch.ego.dim(2) == cfg.state_width,
          "encode_context: ego history must be [B," + std::to_string(cfg.history) + "," +
              std::to_string(cfg.state_width) + "], got " + shape_string(batch.ego.shape()));
  require(batch.neighbor_offsets.size() == b + 1, "encode_context: neighbor offsets must have B+1 entries");
  const Var ego = constant(batch.ego);
  Var h = constant(Tensor({b, cfg.recurrent_width}));
  for (std::size_t t = 0; t < cfg.history; ++t) {
    Var x = ops::reshape(ops::slice(ego, 1, t, t + 1), {b, cfg.state_width});
    h = ops::tanh(ops::add_bias(ops::add(ops::matmul(x, p["rnn.wx"]), ops::matmul(h, p["rnn.wh"])), p["rnn.b"]));
  }
  const std::size_t m = batch.neighbor_offsets.back();
  Var pooled;
  if (m == 0) {
    pooled = constant(Tensor({b, cfg.neighbor_width}));
  } else {
    require(batch.neighbors.size() == m * cfg.neighbor_input_width(), "encode_context: neighbor tensor size mismatch");
    Var nb = ops::relu(linear(p, "nbr.embed", constant(batch.neighbors)));
    pooled = ops::segment_mean(nb, batch.neighbor_offsets, cfg.neighbor_width);
  }
  Var social = linear(p, "nbr.pool", pooled);
  return linear(p, "out", ops::concat({h, social}, 1));
}

Tensor encode_context(const EncoderConfig& cfg, const ParamSet& params, const EncoderBatch& batch) {
  const VarMap bound(params, false);
  return encode_context(cfg, bound, batch).value();
}

}  // namespace cddm
