#include "cddm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "cddm/errors.hpp"

namespace cddm {

void Node::accumulate(const Tensor& g) {
  Tensor& buf = grad_buffer();
  require(buf.size() == g.size(), std::string("gradient size mismatch at ") + op);
  float* dst = buf.data();
  const float* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "parameter";
  node->requires_grad = true;
  return Var(std::move(node));
}

void backward(const Var& loss) {
  require(static_cast<bool>(loss), "backward on empty variable");
  require(loss.size() == 1, "backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer().fill(1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    node->backward(*node);
    for (const auto& parent : node->parents) {
      if (parent->requires_grad && !parent->grad.all_finite()) {
        throw NumericOverflow(node->op, std::string("non-finite gradient produced by backward of ") + node->op);
      }
    }
  }
}

namespace ops {
namespace {

Var make(Tensor value, const char* op, std::vector<std::shared_ptr<Node>> parents,
         std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

float* gbuf(const std::shared_ptr<Node>& p) { return p->grad_buffer().data(); }

void require_same(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

template <typename F, typename D>
Var unary(const Var& x, const char* op, F forward, D derivative) {
  Tensor out(x.shape());
  const float* xv = x.value().data();
  float* ov = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) ov[i] = forward(xv[i]);
  return make(std::move(out), op, {x.ptr()}, [derivative](Node& self) {
    const auto& p = self.parents[0];
    float* g = gbuf(p);
    const float* up = self.grad.data();
    const float* xin = p->value.data();
    const float* y = self.value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) g[i] += up[i] * derivative(xin[i], y[i]);
  });
}

std::size_t rows_of(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make(std::move(out), "add", {a.ptr(), b.ptr()}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      float* g = gbuf(p);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make(std::move(out), "sub", {a.ptr(), b.ptr()}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      float* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      float* g = gbuf(self.parents[1]);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make(std::move(out), "mul", {a.ptr(), b.ptr()}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      float* g = gbuf(pa);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      float* g = gbuf(pb);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, float c) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  return make(std::move(out), "scale", {a.ptr()}, [c](Node& self) {
    float* g = gbuf(self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * c;
  });
}

Var add_bias(const Var& x, const Var& bias) {
  require(bias.value().rank() == 1 && x.value().rank() >= 1 && x.shape().back() == bias.size(),
          "add_bias: bias " + shape_string(bias.shape()) + " does not fit " + shape_string(x.shape()));
  const std::size_t d = bias.size();
  const std::size_t rows = x.size() / std::max<std::size_t>(d, 1);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.value()[r * d + j] + bias.value()[j];
  return make(std::move(out), "add_bias", {x.ptr(), bias.ptr()}, [rows, d](Node& self) {
    if (self.parents[0]->requires_grad) {
      float* g = gbuf(self.parents[0]);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      std::vector<double> acc(d, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) acc[j] += self.grad[r * d + j];
      float* g = gbuf(self.parents[1]);
      for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<float>(acc[j]);
    }
  });
}

Var matmul(const Var& x, const Var& w) {
  require(w.value().rank() == 2, "matmul: weight must be rank 2");
  require(x.value().rank() >= 1 && x.shape().back() == w.dim(0),
          "matmul: " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
  const std::size_t k = w.dim(0);
  const std::size_t n = w.dim(1);
  const std::size_t m = rows_of(x.shape());
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  kernels::gemm(m, n, k, x.value().data(), false, w.value().data(), false, out.data(), false);
  return make(std::move(out), "matmul", {x.ptr(), w.ptr()}, [m, n, k](Node& self) {
    const auto& px = self.parents[0];
    const auto& pw = self.parents[1];
    if (px->requires_grad) kernels::gemm(m, k, n, self.grad.data(), false, pw->value.data(), true, gbuf(px), true);
    if (pw->requires_grad) kernels::gemm(k, n, m, px->value.data(), true, self.grad.data(), false, gbuf(pw), true);
  });
}

Var bmm(const Var& a, const Var& b, bool trans_b) {
  require(a.value().rank() == 3 && b.value().rank() == 3 && a.dim(0) == b.dim(0), "bmm: expects rank-3 operands");
  const std::size_t groups = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t n = trans_b ? b.dim(1) : b.dim(2);
  require((trans_b ? b.dim(2) : b.dim(1)) == k,
          "bmm: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out({groups, m, n});
  for (std::size_t g = 0; g < groups; ++g) {
    kernels::gemm(m, n, k, a.value().data() + g * m * k, false, b.value().data() + g * k * n, trans_b,
                  out.data() + g * m * n, false);
  }
  return make(std::move(out), "bmm", {a.ptr(), b.ptr()}, [groups, m, n, k, trans_b](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    for (std::size_t g = 0; g < groups; ++g) {
      const float* dc = self.grad.data() + g * m * n;
      if (pa->requires_grad) {
        kernels::gemm(m, k, n, dc, false, pb->value.data() + g * k * n, !trans_b, gbuf(pa) + g * m * k, true);
      }
      if (pb->requires_grad) {
        if (trans_b) {
          kernels::gemm(n, k, m, dc, true, pa->value.data() + g * m * k, false, gbuf(pb) + g * k * n, true);
        } else {
          kernels::gemm(k, n, m, pa->value.data() + g * m * k, true, dc, false, gbuf(pb) + g * k * n, true);
        }
      }
    }
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();
  require(axis < first.size(), "concat: axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t trailing = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) trailing *= first[i];
  std::vector<std::size_t> chunk;
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require(s.size() == first.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      require(i == axis || s[i] == first[i], "concat: shape mismatch " + shape_string(s) + " vs " + shape_string(first));
    chunk.push_back(s[axis] * trailing);
    axis_total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  Tensor out(out_shape);
  const std::size_t row = axis_total * trailing;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const float* src = parts[p].value().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src + o * chunk[p], chunk[p], out.data() + o * row + offset);
    offset += chunk[p];
  }
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) parents.push_back(p.ptr());
  return make(std::move(out), "concat", std::move(parents), [outer, row, chunk](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (self.parents[p]->requires_grad) {
        float* g = gbuf(self.parents[p]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < chunk[p]; ++j) g[o * chunk[p] + j] += self.grad[o * row + off + j];
      }
      off += chunk[p];
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  require(axis < s.size() && begin <= end && end <= s[axis], "slice: range out of bounds");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t trailing = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) trailing *= s[i];
  const std::size_t row = s[axis] * trailing;
  const std::size_t chunk = (end - begin) * trailing;
  const std::size_t off = begin * trailing;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.value().data() + o * row + off, chunk, out.data() + o * chunk);
  return make(std::move(out), "slice", {x.ptr()}, [outer, row, chunk, off](Node& self) {
    float* g = gbuf(self.parents[0]);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < chunk; ++j) g[o * row + off + j] += self.grad[o * chunk + j];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make(std::move(out), "reshape", {x.ptr()}, [](Node& self) {
    float* g = gbuf(self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var swap_middle_axes(const Var& x) {
  require(x.value().rank() == 4, "swap_middle_axes: expects rank 4");
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
  Tensor out({a, c, b, d});
  const float* src = x.value().data();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t l = 0; l < c; ++l)
        std::copy_n(src + ((i * b + j) * c + l) * d, d, out.data() + ((i * c + l) * b + j) * d);
  return make(std::move(out), "swap_middle_axes", {x.ptr()}, [a, b, c, d](Node& self) {
    float* g = gbuf(self.parents[0]);
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t l = 0; l < c; ++l) {
          const float* up = self.grad.data() + ((i * c + l) * b + j) * d;
          float* dst = g + ((i * b + j) * c + l) * d;
          for (std::size_t e = 0; e < d; ++e) dst[e] += up[e];
        }
  });
}

Var repeat_rows(const Var& x, std::size_t count) {
  require(x.value().rank() == 2, "repeat_rows: expects rank 2");
  const std::size_t rows = x.dim(0);
  const std::size_t d = x.dim(1);
  Tensor out({rows * count, d});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) std::copy_n(x.value().data() + r * d, d, out.data() + (r * count + c) * d);
  return make(std::move(out), "repeat_rows", {x.ptr()}, [rows, count, d](Node& self) {
    float* g = gbuf(self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c)
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[(r * count + c) * d + j];
  });
}

Var segment_mean(const Var& x, std::span<const std::size_t> offsets, std::size_t width) {
  require(!offsets.empty(), "segment_mean: offsets must hold at least one entry");
  const std::size_t segments = offsets.size() - 1;
  require(x.size() == offsets.back() * width, "segment_mean: offsets do not cover input");
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  Tensor out({segments, width});
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t n = off[s + 1] - off[s];
    if (n == 0) continue;
    for (std::size_t j = 0; j < width; ++j) {
      double acc = 0.0;
      for (std::size_t r = off[s]; r < off[s + 1]; ++r) acc += x.value()[r * width + j];
      out[s * width + j] = static_cast<float>(acc / static_cast<double>(n));
    }
  }
  return make(std::move(out), "segment_mean", {x.ptr()}, [off, width](Node& self) {
    float* g = gbuf(self.parents[0]);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      const std::size_t n = off[s + 1] - off[s];
      if (n == 0) continue;
      const float inv = 1.0f / static_cast<float>(n);
      for (std::size_t r = off[s]; r < off[s + 1]; ++r)
        for (std::size_t j = 0; j < width; ++j) g[r * width + j] += self.grad[s * width + j] * inv;
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (float v : x.value().values()) acc += v;
  return make(Tensor::scalar(static_cast<float>(acc)), "sum", {x.ptr()}, [](Node& self) {
    float* g = gbuf(self.parents[0]);
    const float up = self.grad[0];
    for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += up;
  });
}

Var mean(const Var& x) {
  require(x.size() > 0, "mean of empty tensor");
  double acc = 0.0;
  for (float v : x.value().values()) acc += v;
  const double n = static_cast<double>(x.size());
  return make(Tensor::scalar(static_cast<float>(acc / n)), "mean", {x.ptr()}, [n](Node& self) {
    float* g = gbuf(self.parents[0]);
    const float up = static_cast<float>(self.grad[0] / n);
    for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += up;
  });
}

Var square(const Var& x) {
  return unary(x, "square", [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid", [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Var relu(const Var& x) {
  return unary(x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var gelu(const Var& x) {
  constexpr float inv_sqrt2 = 0.70710678118654752f;
  constexpr float inv_sqrt_2pi = 0.39894228040143268f;
  return unary(
      x, "gelu", [](float v) { return 0.5f * v * (1.0f + std::erf(v * inv_sqrt2)); },
      [](float v, float) { return 0.5f * (1.0f + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5f * v * v); });
}

Var tanh(const Var& x) {
  return unary(x, "tanh", [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Var sin(const Var& x) {
  return unary(x, "sin", [](float v) { return std::sin(v); }, [](float v, float) { return std::cos(v); });
}

Var cos(const Var& x) {
  return unary(x, "cos", [](float v) { return std::cos(v); }, [](float v, float) { return -std::sin(v); });
}

Var softmax(const Var& x) {
  require(x.value().rank() >= 1, "softmax: rank 0 input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / std::max<std::size_t>(d, 1);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.value().data() + r * d;
    float* o = out.data() + r * d;
    const float mx = *std::max_element(in, in + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    const float inv = static_cast<float>(1.0 / total);
    for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
  }
  return make(std::move(out), "softmax", {x.ptr()}, [rows, d](Node& self) {
    float* g = gbuf(self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* y = self.value.data() + r * d;
      const float* up = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(up[j]) * y[j];
      const float fdot = static_cast<float>(dot);
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (up[j] - fdot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& shift, float eps) {
  const std::size_t d = x.shape().back();
  require(gain.size() == d && shift.size() == d, "layer_norm: gain/shift width mismatch");
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  auto normalized = std::make_shared<std::vector<float>>(x.size());
  auto inv_std = std::make_shared<std::vector<float>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = x.value().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = static_cast<float>(rstd);
    for (std::size_t j = 0; j < d; ++j) {
      const float xh = static_cast<float>((in[j] - mu) * rstd);
      (*normalized)[r * d + j] = xh;
      out[r * d + j] = xh * gain.value()[j] + shift.value()[j];
    }
  }
  return make(std::move(out), "layer_norm", {x.ptr(), gain.ptr(), shift.ptr()},
              [rows, d, normalized, inv_std](Node& self) {
                const auto& px = self.parents[0];
                const auto& pg = self.parents[1];
                const auto& pb = self.parents[2];
                const float* xh = normalized->data();
                const float* up = self.grad.data();
                if (pg->requires_grad || pb->requires_grad) {
                  std::vector<double> dg(d, 0.0), db(d, 0.0);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                      dg[j] += static_cast<double>(up[r * d + j]) * xh[r * d + j];
                      db[j] += up[r * d + j];
                    }
                  if (pg->requires_grad) {
                    float* g = gbuf(pg);
                    for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<float>(dg[j]);
                  }
                  if (pb->requires_grad) {
                    float* g = gbuf(pb);
                    for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<float>(db[j]);
                  }
                }
                if (px->requires_grad) {
                  float* g = gbuf(px);
                  const float* gain_v = pg->value.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dxh = static_cast<double>(up[r * d + j]) * gain_v[j];
                      m1 += dxh;
                      m2 += dxh * xh[r * d + j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    const double rstd = (*inv_std)[r];
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dxh = static_cast<double>(up[r * d + j]) * gain_v[j];
                      g[r * d + j] += static_cast<float>(rstd * (dxh - m1 - xh[r * d + j] * m2));
                    }
                  }
                }
              });
}

Var mse(const Var& a, const Var& b) { return mean(square(sub(a, b))); }

}  // namespace ops
}  // namespace cddm
