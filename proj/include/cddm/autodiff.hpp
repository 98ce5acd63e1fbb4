#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cddm/tensor.hpp"

namespace cddm {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";
  bool requires_grad = false;

  // Adds `g` into this node's gradient buffer.
  void accumulate(const Tensor& g);
  Tensor& grad_buffer();
};

// Handle to a node of the computation graph. Operations on handles whose inputs
// need no gradient record nothing, so inference builds no tape.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Tensor& grad() const { return node_->grad; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Reverse sweep from a one-element `loss`. Throws NumericOverflow naming the
// primitive whose backward produced a non-finite gradient.
void backward(const Var& loss);

namespace ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float c);
// x[..., d] + bias[d]
Var add_bias(const Var& x, const Var& bias);
// x[rows, K] (any leading dims flattened) times w[K, N]
Var matmul(const Var& x, const Var& w);
// Batched a[G,M,K] * b[G,K,N] (b[G,N,K] when trans_b).
Var bmm(const Var& a, const Var& b, bool trans_b = false);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Shape shape);
// [A,B,C,D] -> [A,C,B,D]
Var swap_middle_axes(const Var& x);
// x[B, d] -> [B*count, d], each row repeated `count` times consecutively.
Var repeat_rows(const Var& x, std::size_t count);
// Mean of row segments: out[b] = mean(x[offsets[b] .. offsets[b+1])), zero for empty segments.
Var segment_mean(const Var& x, std::span<const std::size_t> offsets, std::size_t width);
Var sum(const Var& x);
Var mean(const Var& x);
Var square(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var gelu(const Var& x);
Var tanh(const Var& x);
Var sin(const Var& x);
Var cos(const Var& x);
// Softmax over the last axis.
Var softmax(const Var& x);
// Layer normalization over the last axis with learned gain and shift.
Var layer_norm(const Var& x, const Var& gain, const Var& shift, float eps = 1e-5f);
// mean((a - b)^2)
Var mse(const Var& a, const Var& b);

}  // namespace ops
}  // namespace cddm
