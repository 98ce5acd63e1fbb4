#include "cddm/model.hpp"

#include <algorithm>
#include <cstring>

#include "cddm/errors.hpp"

namespace cddm {

BoundDecoder::BoundDecoder(const DenoiserConfig& cfg, const ParamSet& params) : cfg_(cfg), bound_(params, false) {}

Tensor BoundDecoder::operator()(const Tensor& y, std::span<const double> labels, const Tensor& f) const {
  return denoise(cfg_, bound_, constant(y), labels, constant(f)).value();
}

namespace {

std::size_t row_width(const Tensor& t, std::span<const double> times) {
  require(t.rank() >= 1 && t.dim(0) == times.size(), "one time per row required, got " +
                                                         std::to_string(times.size()) + " for shape " +
                                                         shape_string(t.shape()));
  return t.dim(0) == 0 ? 0 : t.size() / t.dim(0);
}

// out_r = a(t_r) * x_r + b(t_r) * y_r, in double.
template <typename Coef>
Tensor combine_rows(const Tensor& x, const Tensor& y, std::span<const double> times, const NoiseSchedule& sched,
                    Coef coef) {
  require(x.shape() == y.shape(), "row combine: shape mismatch " + shape_string(x.shape()) + " vs " +
                                      shape_string(y.shape()));
  const std::size_t w = row_width(x, times);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < times.size(); ++r) {
    const auto [a, b] = coef(sched.at(times[r]));
    for (std::size_t j = r * w; j < (r + 1) * w; ++j)
      out[j] = static_cast<float>(a * static_cast<double>(x[j]) + b * static_cast<double>(y[j]));
  }
  return out;
}

}  // namespace

Tensor x0_from_v_rows(const Tensor& y, const Tensor& v, std::span<const double> times, const NoiseSchedule& sched) {
  return combine_rows(y, v, times, sched, [](AlphaSigma s) { return std::pair{s.alpha, -s.sigma}; });
}

Tensor v_from_x0_rows(const Tensor& y, const Tensor& x0, std::span<const double> times, const NoiseSchedule& sched) {
  // v = alpha eps - sigma x0 with eps = (y - alpha x0)/sigma  =>  v = (alpha y - x0)/sigma.
  return combine_rows(y, x0, times, sched, [](AlphaSigma s) { return std::pair{s.alpha / s.sigma, -1.0 / s.sigma}; });
}

Tensor q_sample_rows(const Tensor& y0, const Tensor& eps, std::span<const double> times, const NoiseSchedule& sched) {
  return combine_rows(y0, eps, times, sched, [](AlphaSigma s) { return std::pair{s.alpha, s.sigma}; });
}

Tensor v_target_rows(const Tensor& y0, const Tensor& eps, std::span<const double> times, const NoiseSchedule& sched) {
  return combine_rows(y0, eps, times, sched, [](AlphaSigma s) { return std::pair{-s.sigma, s.alpha}; });
}

VPredictor standard_predictor(const BoundDecoder& decoder, const Tensor& f, double label_offset,
                              const NoiseSchedule& sched) {
  return [&decoder, f, label_offset, &sched](const Tensor& y, std::span<const double> times) {
    if (label_offset == 0.0) return decoder(y, times, f);
    std::vector<double> labels(times.size()), reading(times.size());
    for (std::size_t r = 0; r < times.size(); ++r) {
      labels[r] = std::max(0.0, times[r] - label_offset);
      reading[r] = reading_time(labels[r], times[r]);
    }
    const Tensor x0 = x0_from_v_rows(y, decoder(y, labels, f), reading, sched);
    return v_from_x0_rows(y, x0, times, sched);
  };
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  require(t.rank() >= 1, "gather_rows: scalar tensor");
  Shape shape = t.shape();
  const std::size_t w = t.dim(0) == 0 ? 0 : t.size() / t.dim(0);
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < t.dim(0), "gather_rows: row index out of range");
    std::memcpy(out.data() + i * w, t.data() + rows[i] * w, w * sizeof(float));
  }
  return out;
}

EncoderBatch gather_batch(const EncoderBatch& all, std::span<const std::size_t> rows) {
  EncoderBatch out;
  out.ego = gather_rows(all.ego, rows);
  const std::size_t w = all.neighbors.rank() == 2 ? all.neighbors.dim(1) : 0;
  std::vector<float> nbr;
  out.neighbor_offsets.push_back(0);
  for (std::size_t r : rows) {
    const std::size_t b = all.neighbor_offsets[r], e = all.neighbor_offsets[r + 1];
    nbr.insert(nbr.end(), all.neighbors.data() + b * w, all.neighbors.data() + e * w);
    out.neighbor_offsets.push_back(out.neighbor_offsets.back() + (e - b));
  }
  out.neighbors = Tensor({out.neighbor_offsets.back(), w}, std::move(nbr));
  return out;
}

Tensor encode_all(const EncoderConfig& cfg, const ParamSet& params, const EncoderBatch& all, std::size_t chunk) {
  const std::size_t n = all.batch();
  Tensor out({n, cfg.output_width});
  const VarMap bound(params, false);
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < n; b += chunk) {
    rows.clear();
    for (std::size_t r = b; r < std::min(n, b + chunk); ++r) rows.push_back(r);
    const Tensor f = encode_context(cfg, bound, gather_batch(all, rows)).value();
    std::copy(f.values().begin(), f.values().end(), out.data() + b * cfg.output_width);
  }
  return out;
}

}  // namespace cddm
