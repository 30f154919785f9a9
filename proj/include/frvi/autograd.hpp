#pragma once

// Minimal tape-free reverse-mode autodiff over Tensor. Every op records its
// inputs and a closure that pushes the output gradient into them; backward()
// walks the resulting DAG in reverse topological order.

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "frvi/tensor.hpp"

namespace frvi::ad {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation (or eagerly for params)
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor::Matrix& g);
  Tensor& grad_buffer();  // zero-initialised on first use
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  // Zero tensor of the right shape when no gradient has reached this node.
  Tensor grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }

bool grad_enabled();

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Seeds d(root)/d(root) = 1 for a scalar root and propagates.
void backward(const Var& root);

// --- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var elu(const Var& a);
Var clamp(const Var& a, Real lo, Real hi);
// x (C,H,W) times w (C,1,1) broadcast over space.
Var mul_channelwise(const Var& x, const Var& w);
// known * a + (1 - known) * b, known is a fixed single-channel 0/1 map.
Var composite(const Tensor& known, const Var& a, const Var& b);

// --- structural ------------------------------------------------------------
Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& a, int begin, int count);
Var upsample2x(const Var& a);

// --- convolution -----------------------------------------------------------
// weight (Cout, Cin, k*k), bias (Cout, 1, 1) or undefined; zero padding k/2.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride);

struct PartialConvResult {
  Var output;
  Tensor mask;  // (1, Ho, Wo), 1 = valid output
};
// known: (1,H,W) or (Cin,H,W) with 1 = known input sample.
PartialConvResult partial_conv2d(const Var& x, const Tensor& known,
                                 const Var& weight, const Var& bias,
                                 int stride);

// --- warping ---------------------------------------------------------------
Var warp(const Var& frame, const Var& flow);

// --- reductions (scalar outputs) -------------------------------------------
// sum over pixels/channels of mask * |a - b|; mask (1,H,W) broadcast.
Var masked_abs_sum(const Var& a, const Var& b, const Tensor& mask);
Var abs_sum(const Var& a, const Var& b);
Var dot(const Var& a, const Tensor& weights);
Var sum(std::span<const Var> scalars);

}  // namespace frvi::ad
