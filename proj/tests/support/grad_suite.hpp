#pragma once

// Finite-difference sweep over every autodiff primitive and the full denoiser.

#include <array>
#include <string>
#include <vector>

#include "cddm/nets.hpp"
#include "oracles.hpp"

namespace oracle {

struct GradCase {
  std::string primitive;
  std::size_t variant = 0;
  GradReport report;
};

namespace detail {

using namespace cddm;
using namespace cddm::ops;

inline Tensor randn(RandomSource& rng, const Shape& shape, float scale = 1.0f) {
  Tensor t = gaussian(rng, shape);
  for (float& v : t.values()) v *= scale;
  return t;
}

// Keeps inputs of kinked primitives away from the kink so central differences are valid.
inline Tensor away_from_zero(Tensor t, float margin = 0.05f) {
  for (float& v : t.values())
    if (std::abs(v) < margin) v = v < 0 ? v - 2 * margin : v + 2 * margin;
  return t;
}

// Random projection so every output entry contributes to the scalar loss.
inline Var project(const Var& out, RandomSource& rng) {
  return sum(mul(out, constant(randn(rng, out.shape()))));
}

}  // namespace detail

// Float32 forward passes carry rounding noise of about eps * |loss| / step in a central
// difference, while truncation error is about step^2 / 6 relative; 1e-2 balances the two.
inline constexpr double kProbeStep = 1e-2;

inline std::vector<GradCase> primitive_gradient_suite() {
  using namespace detail;
  const std::array<Shape, 3> shapes = {Shape{3, 4}, Shape{2, 5}, Shape{4, 3}};
  std::vector<GradCase> out;
  auto run = [&](const std::string& name, std::size_t variant, const ParamSet& params,
                 const std::function<Var(const VarMap&, RandomSource&)>& body) {
    const std::uint64_t proj_seed = 1000 + variant;
    auto loss = [&](const VarMap& p) {
      RandomSource proj(proj_seed, 7);
      return body(p, proj);
    };
    out.push_back({name, variant, check_gradients(params, loss, kProbeStep)});
  };

  for (std::size_t v = 0; v < shapes.size(); ++v) {
    RandomSource rng(42 + v, 1);
    const Shape& s = shapes[v];
    const std::size_t rows = s[0], cols = s[1];
    ParamSet two;
    two.set("a", randn(rng, s));
    two.set("b", randn(rng, s));
    ParamSet one;
    one.set("x", randn(rng, s));

    run("add", v, two, [](const VarMap& p, RandomSource& r) { return project(add(p["a"], p["b"]), r); });
    run("sub", v, two, [](const VarMap& p, RandomSource& r) { return project(sub(p["a"], p["b"]), r); });
    run("mul", v, two, [](const VarMap& p, RandomSource& r) { return project(mul(p["a"], p["b"]), r); });
    run("scale", v, one, [](const VarMap& p, RandomSource& r) { return project(scale(p["x"], -1.7f), r); });

    ParamSet biased = one;
    biased.set("bias", randn(rng, {cols}));
    run("add_bias", v, biased, [](const VarMap& p, RandomSource& r) { return project(add_bias(p["x"], p["bias"]), r); });

    ParamSet mm = one;
    mm.set("w", randn(rng, {cols, 2 + v}));
    run("matmul", v, mm, [](const VarMap& p, RandomSource& r) { return project(matmul(p["x"], p["w"]), r); });

    ParamSet bm;
    bm.set("a", randn(rng, {2, rows, cols}));
    bm.set("b", randn(rng, {2, cols, 3}));
    bm.set("bt", randn(rng, {2, 3, cols}));
    run("bmm", v, bm, [](const VarMap& p, RandomSource& r) {
      return add(project(bmm(p["a"], p["b"]), r), project(bmm(p["a"], p["bt"], true), r));
    });

    run("concat", v, two, [](const VarMap& p, RandomSource& r) {
      return add(project(concat({p["a"], p["b"]}, 0), r), project(concat({p["a"], p["b"], p["a"]}, 1), r));
    });
    run("slice", v, one, [cols](const VarMap& p, RandomSource& r) {
      return add(project(slice(p["x"], 1, 1, cols), r), project(slice(p["x"], 0, 0, 1), r));
    });
    run("reshape", v, one, [rows, cols](const VarMap& p, RandomSource& r) {
      return project(reshape(p["x"], {cols, rows}), r);
    });

    ParamSet four;
    four.set("x", randn(rng, {2, rows, cols, 2}));
    run("swap_middle_axes", v, four, [](const VarMap& p, RandomSource& r) { return project(swap_middle_axes(p["x"]), r); });
    run("repeat_rows", v, one, [v](const VarMap& p, RandomSource& r) { return project(repeat_rows(p["x"], 2 + v), r); });

    // Segments of unequal length, including an empty one.
    const std::vector<std::size_t> offsets = {0, 1, 1, rows};
    run("segment_mean", v, one, [offsets, cols](const VarMap& p, RandomSource& r) {
      return project(segment_mean(p["x"], offsets, cols), r);
    });

    run("sum", v, one, [](const VarMap& p, RandomSource&) { return sum(mul(p["x"], p["x"])); });
    run("mean", v, one, [](const VarMap& p, RandomSource& r) { return mean(mul(p["x"], constant(randn(r, p["x"].shape())))); });
    run("square", v, one, [](const VarMap& p, RandomSource& r) { return project(square(p["x"]), r); });
    run("sigmoid", v, one, [](const VarMap& p, RandomSource& r) { return project(sigmoid(p["x"]), r); });

    ParamSet kinked;
    kinked.set("x", away_from_zero(randn(rng, s)));
    run("relu", v, kinked, [](const VarMap& p, RandomSource& r) { return project(relu(p["x"]), r); });
    run("gelu", v, one, [](const VarMap& p, RandomSource& r) { return project(gelu(p["x"]), r); });
    run("tanh", v, one, [](const VarMap& p, RandomSource& r) { return project(ops::tanh(p["x"]), r); });
    run("sin", v, one, [](const VarMap& p, RandomSource& r) { return project(ops::sin(p["x"]), r); });
    run("cos", v, one, [](const VarMap& p, RandomSource& r) { return project(ops::cos(p["x"]), r); });
    run("softmax", v, one, [](const VarMap& p, RandomSource& r) { return project(softmax(p["x"]), r); });

    ParamSet ln = one;
    ln.set("gain", randn(rng, {cols}));
    ln.set("shift", randn(rng, {cols}));
    run("layer_norm", v, ln, [](const VarMap& p, RandomSource& r) {
      return project(layer_norm(p["x"], p["gain"], p["shift"]), r);
    });
    run("mse", v, two, [](const VarMap& p, RandomSource&) { return mse(p["a"], p["b"]); });
  }
  return out;
}

// Full denoiser (and its context encoder) probed on sampled parameter entries.
inline std::vector<GradCase> denoiser_gradient_suite(std::size_t hidden = 16, std::size_t horizon = 4) {
  using namespace detail;
  std::vector<GradCase> out;
  for (std::size_t seed = 0; seed < 3; ++seed) {
    DenoiserConfig cfg;
    cfg.hidden = hidden;
    cfg.horizon = horizon;
    cfg.context_width = 8;
    RandomSource rng(900 + seed, 3);
    const ParamSet params = init_denoiser(cfg, rng);
    const std::size_t batch = 2;
    const Tensor y = randn(rng, {batch, horizon, 2});
    const Tensor f = randn(rng, {batch, cfg.context_width});
    const std::vector<double> times = {0.25 + 0.1 * static_cast<double>(seed), 0.8};
    const Tensor target = randn(rng, {batch, horizon, 2});
    auto loss = [&](const VarMap& p) { return mse(denoise(cfg, p, constant(y), times, constant(f)), constant(target)); };
    out.push_back({"denoiser", seed, check_gradients(params, loss, kProbeStep, 10, seed)});
  }
  return out;
}

}  // namespace oracle
