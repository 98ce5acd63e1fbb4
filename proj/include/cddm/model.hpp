#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cddm/data.hpp"
#include "cddm/nets.hpp"
#include "cddm/params.hpp"
#include "cddm/schedule.hpp"

namespace cddm {

// Everything needed to turn observed windows into sampled futures.
struct Model {
  DenoiserConfig denoiser;
  ParamSet decoder;
  EncoderConfig encoder;
  ParamSet encoder_params;
  Standardizer standardizer;
  NoiseSchedule schedule;
  std::size_t steps = 128;  // K the decoder was trained or distilled for
  // Distilled decoders are trained with the label one student step below the
  // input's noise level (k'' = k - 1/K); `shifted` records that convention.
  bool shifted = false;

  double label_offset() const { return shifted ? 1.0 / static_cast<double>(steps) : 0.0; }
};

// Decoder parameters bound once as graph constants for repeated inference.
class BoundDecoder {
 public:
  BoundDecoder(const DenoiserConfig& cfg, const ParamSet& params);
  // Raw v output, y[B,P,2], one label per row, f[B,F].
  Tensor operator()(const Tensor& y, std::span<const double> labels, const Tensor& f) const;
  const DenoiserConfig& config() const { return cfg_; }

 private:
  DenoiserConfig cfg_;
  VarMap bound_;
};

// Time at which a decoder output is read as v. Shifted decoders are queried at the label
// k - offset, but at label 0 sigma is ~0 and v barely moves x0, so that final step's output
// is read at the row's true time k instead.
inline double reading_time(double label, double k) { return label == 0.0 ? k : label; }

// v prediction at the rows' true noise levels, y[B,P,2] -> [B,P,2].
using VPredictor = std::function<Tensor(const Tensor& y, std::span<const double> times)>;

// Wraps a decoder queried at labels time - offset into a standard v-predictor: its x0 is
// reconstructed with the label's coefficients and re-expressed as v at the true time.
VPredictor standard_predictor(const BoundDecoder& decoder, const Tensor& f, double label_offset,
                              const NoiseSchedule& sched);

// Row-wise forms of the schedule algebra (one time per leading row).
Tensor x0_from_v_rows(const Tensor& y, const Tensor& v, std::span<const double> times, const NoiseSchedule& sched);
Tensor v_from_x0_rows(const Tensor& y, const Tensor& x0, std::span<const double> times, const NoiseSchedule& sched);
Tensor q_sample_rows(const Tensor& y0, const Tensor& eps, std::span<const double> times, const NoiseSchedule& sched);
Tensor v_target_rows(const Tensor& y0, const Tensor& eps, std::span<const double> times, const NoiseSchedule& sched);

// Rows of t (axis 0) picked by index.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);
// Context features of every window, computed in chunks with the given encoder.
Tensor encode_all(const EncoderConfig& cfg, const ParamSet& params, const EncoderBatch& all, std::size_t chunk = 256);
EncoderBatch gather_batch(const EncoderBatch& all, std::span<const std::size_t> rows);

}  // namespace cddm
