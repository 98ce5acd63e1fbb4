#include "cddm/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <functional>
#include <numeric>

#include "cddm/errors.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace cddm {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  require(data_.size() == shape_size(shape_),
          "tensor value count " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
}

float Tensor::item() const {
  require(data_.size() == 1, "item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_size(shape) == data_.size(),
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  // An all-ones exponent marks Inf or NaN; OR-reducing the test vectorizes.
  std::uint32_t bad = 0;
  for (float v : data_) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    bad |= static_cast<std::uint32_t>((bits & 0x7f800000u) == 0x7f800000u);
  }
  return bad == 0;
}

namespace kernels {
namespace {

constexpr std::size_t kPanel = 16;
constexpr std::size_t kRows = 8;

// B re-laid as column panels of 16 doubles so the micro-kernel streams contiguously.
std::vector<double> pack_b(std::size_t n, std::size_t k, const float* b, bool trans_b) {
  const std::size_t panels = (n + kPanel - 1) / kPanel;
  std::vector<double> out(panels * k * kPanel, 0.0);
  for (std::size_t p = 0; p < panels; ++p) {
    const std::size_t cols = std::min(kPanel, n - p * kPanel);
    double* dst = out.data() + p * k * kPanel;
    for (std::size_t kk = 0; kk < k; ++kk) {
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t col = p * kPanel + j;
        dst[kk * kPanel + j] = trans_b ? b[col * k + kk] : b[kk * n + col];
      }
    }
  }
  return out;
}

template <int R>
void micro_kernel(std::size_t k, const float* a, const double* bp, double* tile) {
#if defined(__AVX512F__)
  __m512d acc0[R];
  __m512d acc1[R];
  for (int r = 0; r < R; ++r) {
    acc0[r] = _mm512_setzero_pd();
    acc1[r] = _mm512_setzero_pd();
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    const __m512d b0 = _mm512_loadu_pd(bp + kk * kPanel);
    const __m512d b1 = _mm512_loadu_pd(bp + kk * kPanel + 8);
    for (int r = 0; r < R; ++r) {
      const __m512d av = _mm512_set1_pd(static_cast<double>(a[r * k + kk]));
      acc0[r] = _mm512_fmadd_pd(av, b0, acc0[r]);
      acc1[r] = _mm512_fmadd_pd(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm512_storeu_pd(tile + r * kPanel, acc0[r]);
    _mm512_storeu_pd(tile + r * kPanel + 8, acc1[r]);
  }
#else
  double acc[R][kPanel] = {};
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* b = bp + kk * kPanel;
    for (int r = 0; r < R; ++r) {
      const double av = a[r * k + kk];
      for (std::size_t j = 0; j < kPanel; ++j) acc[r][j] += av * b[j];
    }
  }
  for (int r = 0; r < R; ++r)
    for (std::size_t j = 0; j < kPanel; ++j) tile[r * kPanel + j] = acc[r][j];
#endif
}

void run_rows(std::size_t rows, std::size_t k, const float* a, const double* bp, double* tile) {
  switch (rows) {
    case 8: micro_kernel<8>(k, a, bp, tile); break;
    case 7: micro_kernel<7>(k, a, bp, tile); break;
    case 6: micro_kernel<6>(k, a, bp, tile); break;
    case 5: micro_kernel<5>(k, a, bp, tile); break;
    case 4: micro_kernel<4>(k, a, bp, tile); break;
    case 3: micro_kernel<3>(k, a, bp, tile); break;
    case 2: micro_kernel<2>(k, a, bp, tile); break;
    default: micro_kernel<1>(k, a, bp, tile); break;
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, bool trans_a, const float* b,
          bool trans_b, float* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, 0.0f);
    return;
  }
  std::vector<float> a_rows;
  if (trans_a) {
    a_rows.resize(m * k);
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t i = 0; i < m; ++i) a_rows[i * k + kk] = a[kk * m + i];
    a = a_rows.data();
  }
  const std::vector<double> bp = pack_b(n, k, b, trans_b);
  const std::size_t panels = (n + kPanel - 1) / kPanel;
  double tile[kRows * kPanel];
  for (std::size_t p = 0; p < panels; ++p) {
    const std::size_t cols = std::min(kPanel, n - p * kPanel);
    const double* panel = bp.data() + p * k * kPanel;
    for (std::size_t i0 = 0; i0 < m; i0 += kRows) {
      const std::size_t rows = std::min(kRows, m - i0);
      run_rows(rows, k, a + i0 * k, panel, tile);
      for (std::size_t r = 0; r < rows; ++r) {
        float* out = c + (i0 + r) * n + p * kPanel;
        const double* src = tile + r * kPanel;
        if (accumulate) {
          for (std::size_t j = 0; j < cols; ++j) out[j] = static_cast<float>(out[j] + src[j]);
        } else {
          for (std::size_t j = 0; j < cols; ++j) out[j] = static_cast<float>(src[j]);
        }
      }
    }
  }
}

}  // namespace kernels
}  // namespace cddm
