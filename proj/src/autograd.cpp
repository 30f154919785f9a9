#include "frvi/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "frvi/kernels.hpp"

namespace frvi::ad {

namespace {

thread_local bool g_grad_enabled = true;

using Matrix = Tensor::Matrix;

Var make_op(Tensor value, std::initializer_list<Var> inputs,
            std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const Var& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Var& v : inputs) node->inputs.push_back(v.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

Var make_op_list(Tensor value, std::span<const Var> inputs,
                 std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const Var& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Var& v : inputs) node->inputs.push_back(v.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

bool wants(const Node& self, std::size_t i) {
  return self.inputs[i]->requires_grad;
}

void check_same(const Var& a, const Var& b, const char* op) {
  require_shape(b.shape(), a.shape(), op);
}

// Row-vector (1 x HW) broadcast of a single-channel map.
Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> as_row(
    const Tensor& t) {
  return Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(
      t.data(), t.shape().plane());
}

void require_single_channel_map(const Tensor& m, const Shape& like,
                                const char* op) {
  if (m.channels() != 1 || m.height() != like.height ||
      m.width() != like.width) {
    throw ShapeError(std::string(op) + ": mask shape " + to_string(m.shape()) +
                     " incompatible with " + to_string(like));
  }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  Tensor& buf = grad_buffer();
  buf.matrix() += g;
}

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.shape() == node_->value.shape()) return node_->grad;
  return Tensor(node_->value.shape());
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1) {
    throw ShapeError("backward: root must be a scalar");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward_fn) continue;
    if (n->grad.shape() != n->value.shape()) continue;  // no gradient arrived
    n->backward_fn(*n);
    n->grad = Tensor();  // interior gradients are not kept
  }
}

// --- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor out(a.shape(), a.value().matrix() + b.value().matrix());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.inputs[0]->accumulate(self.grad.matrix());
    if (wants(self, 1)) self.inputs[1]->accumulate(self.grad.matrix());
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor out(a.shape(), a.value().matrix() - b.value().matrix());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.inputs[0]->accumulate(self.grad.matrix());
    if (wants(self, 1)) self.inputs[1]->accumulate(-self.grad.matrix());
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tensor out(a.shape(),
             (a.value().array() * b.value().array()).matrix());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad.array();
    if (wants(self, 0))
      self.inputs[0]->accumulate((g * self.inputs[1]->value.array()).matrix());
    if (wants(self, 1))
      self.inputs[1]->accumulate((g * self.inputs[0]->value.array()).matrix());
  });
}

Var scale(const Var& a, Real s) {
  Tensor out(a.shape(), a.value().matrix() * s);
  return make_op(std::move(out), {a}, [s](Node& self) {
    self.inputs[0]->accumulate(self.grad.matrix() * s);
  });
}

Var sigmoid(const Var& a) {
  Tensor out(a.shape(),
             (1.0 / (1.0 + (-a.value().array()).exp())).matrix());
  return make_op(std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    self.inputs[0]->accumulate((self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Var tanh(const Var& a) {
  Tensor out(a.shape(), a.value().array().tanh().matrix());
  return make_op(std::move(out), {a}, [](Node& self) {
    const auto& y = self.value.array();
    self.inputs[0]->accumulate((self.grad.array() * (1.0 - y * y)).matrix());
  });
}

Var elu(const Var& a) {
  const auto& x = a.value().array();
  Tensor out(a.shape(), (x > 0.0).select(x, x.exp() - 1.0).matrix());
  return make_op(std::move(out), {a}, [](Node& self) {
    const auto& x = self.inputs[0]->value.array();
    self.inputs[0]->accumulate(
        (self.grad.array() * (x > 0.0).select(1.0, x.exp())).matrix());
  });
}

Var clamp(const Var& a, Real lo, Real hi) {
  Tensor out(a.shape(), a.value().array().max(lo).min(hi).matrix());
  return make_op(std::move(out), {a}, [lo, hi](Node& self) {
    const auto& x = self.inputs[0]->value.array();
    self.inputs[0]->accumulate(
        ((x >= lo && x <= hi).select(self.grad.array(), 0.0)).matrix());
  });
}

Var mul_channelwise(const Var& x, const Var& w) {
  const Shape& xs = x.shape();
  if (w.shape() != Shape{xs.channels, 1, 1}) {
    throw ShapeError("mul_channelwise: weight " + to_string(w.shape()) +
                     " incompatible with " + to_string(xs));
  }
  Tensor out(xs, (x.value().array().colwise() *
                  w.value().matrix().col(0).array())
                     .matrix());
  return make_op(std::move(out), {x, w}, [](Node& self) {
    const auto& g = self.grad.array();
    if (wants(self, 0))
      self.inputs[0]->accumulate(
          (g.colwise() * self.inputs[1]->value.matrix().col(0).array())
              .matrix());
    if (wants(self, 1))
      self.inputs[1]->accumulate(
          (g * self.inputs[0]->value.array()).rowwise().sum().matrix());
  });
}

Var composite(const Tensor& known, const Var& a, const Var& b) {
  check_same(a, b, "composite");
  require_single_channel_map(known, a.shape(), "composite");
  const auto k = as_row(known).array();
  Tensor out(a.shape());
  out.matrix() = ((a.value().array().rowwise() * k) +
                  (b.value().array().rowwise() * (1.0 - k)))
                     .matrix();
  return make_op(std::move(out), {a, b}, [known](Node& self) {
    const auto k = as_row(known).array();
    const auto& g = self.grad.array();
    if (wants(self, 0))
      self.inputs[0]->accumulate((g.rowwise() * k).matrix());
    if (wants(self, 1))
      self.inputs[1]->accumulate((g.rowwise() * (1.0 - k)).matrix());
  });
}

// --- structural ------------------------------------------------------------

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = parts[0].shape();
  int channels = 0;
  for (const Var& p : parts) {
    if (p.shape().height != first.height || p.shape().width != first.width) {
      throw ShapeError("concat_channels: spatial mismatch " +
                       to_string(p.shape()) + " vs " + to_string(first));
    }
    channels += p.shape().channels;
  }
  Tensor out(channels, first.height, first.width);
  int row = 0;
  std::vector<int> offsets;
  for (const Var& p : parts) {
    offsets.push_back(row);
    out.matrix().middleRows(row, p.shape().channels) = p.value().matrix();
    row += p.shape().channels;
  }
  return make_op_list(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (!wants(self, i)) continue;
      const int c = self.inputs[i]->value.channels();
      self.inputs[i]->accumulate(self.grad.matrix().middleRows(offsets[i], c));
    }
  });
}

Var slice_channels(const Var& a, int begin, int count) {
  if (begin < 0 || count <= 0 || begin + count > a.shape().channels) {
    throw ShapeError("slice_channels: range out of bounds");
  }
  Tensor out({count, a.shape().height, a.shape().width},
             a.value().matrix().middleRows(begin, count));
  return make_op(std::move(out), {a}, [begin, count](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    g.matrix().middleRows(begin, count) += self.grad.matrix();
  });
}

Var upsample2x(const Var& a) {
  return make_op(kernels::upsample2x(a.value()), {a}, [](Node& self) {
    kernels::upsample2x_backward_add(self.grad,
                                     self.inputs[0]->grad_buffer());
  });
}

// --- convolution -----------------------------------------------------------

namespace {

int kernel_size(const Shape& ws) {
  const int k = static_cast<int>(std::lround(std::sqrt(ws.width)));
  if (k * k != ws.width || k % 2 == 0) {
    throw ShapeError("conv weight must be (Cout, Cin, k*k) with odd k, got " +
                     to_string(ws));
  }
  return k;
}

void check_conv_args(const Var& x, const Var& weight, const Var& bias, int k) {
  const Shape& ws = weight.shape();
  if (x.shape().channels != ws.height) {
    throw ShapeError("conv: input " + to_string(x.shape()) +
                     " does not match weight " + to_string(ws));
  }
  if (bias.defined() && bias.shape() != Shape{ws.channels, 1, 1}) {
    throw ShapeError("conv: bias shape " + to_string(bias.shape()));
  }
  if (k > x.shape().height + 2 * (k / 2) || k > x.shape().width + 2 * (k / 2) ||
      x.shape().height < 1 || x.shape().width < 1) {
    throw ShapeError("conv: kernel larger than input");
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride) {
  const Shape ws = weight.shape();
  const int k = kernel_size(ws);
  check_conv_args(x, weight, bias, k);
  const int pad = k / 2;
  const int Ho = kernels::conv_out_size(x.shape().height, k, stride, pad);
  const int Wo = kernels::conv_out_size(x.shape().width, k, stride, pad);

  Matrix cols;
  kernels::im2col(x.value(), k, stride, pad, cols);
  Tensor out(ws.channels, Ho, Wo);
  out.matrix().noalias() = weight.value().matrix() * cols;
  if (bias.defined()) out.matrix().colwise() += bias.value().matrix().col(0);

  const Var b = bias.defined() ? bias : Var(Tensor(ws.channels, 1, 1));
  if (!grad_enabled()) return Var(std::move(out));
  return make_op(
      std::move(out), {x, weight, b},
      [cols = std::move(cols), k, stride, pad](Node& self) {
        const Matrix& g = self.grad.matrix();
        if (wants(self, 1))
          self.inputs[1]->accumulate(g * cols.transpose());
        if (wants(self, 2))
          self.inputs[2]->accumulate(g.rowwise().sum());
        if (wants(self, 0)) {
          Matrix dcols = self.inputs[1]->value.matrix().transpose() * g;
          kernels::col2im_add<Real>(dcols, k, stride, pad,
                                    self.inputs[0]->grad_buffer());
        }
      });
}

PartialConvResult partial_conv2d(const Var& x, const Tensor& known,
                                 const Var& weight, const Var& bias,
                                 int stride) {
  const Shape ws = weight.shape();
  const int k = kernel_size(ws);
  check_conv_args(x, weight, bias, k);
  const Shape& xs = x.shape();
  if ((known.channels() != 1 && known.channels() != xs.channels) ||
      known.height() != xs.height || known.width() != xs.width) {
    throw ShapeError("partial_conv: mask " + to_string(known.shape()) +
                     " incompatible with input " + to_string(xs));
  }
  const int pad = k / 2;
  const int Ho = kernels::conv_out_size(xs.height, k, stride, pad);
  const int Wo = kernels::conv_out_size(xs.width, k, stride, pad);

  const Tensor known_full = broadcast_channels(known, xs.channels);
  Tensor xm(xs, (x.value().array() * known_full.array()).matrix());
  Matrix cols;
  kernels::im2col(xm, k, stride, pad, cols);
  Matrix mcols;
  kernels::im2col(known, k, stride, pad, mcols);
  const Eigen::Matrix<Real, 1, Eigen::Dynamic> msum = mcols.colwise().sum();
  const Real window = static_cast<Real>(known.channels() * k * k);
  // Zero-padding taps count as known zeros in the renormaliser, so a full
  // mask reproduces the plain convolution at the border too. Validity still
  // needs a known in-frame tap.
  Matrix inside;
  kernels::im2col(Tensor::constant(known.shape(), 1.0), k, stride, pad, inside);
  const Eigen::Matrix<Real, 1, Eigen::Dynamic> padding =
      window - inside.colwise().sum().array();

  Eigen::Matrix<Real, 1, Eigen::Dynamic> ratio(Ho * Wo), valid(Ho * Wo);
  for (int i = 0; i < Ho * Wo; ++i) {
    valid(i) = msum(i) > 0 ? 1.0 : 0.0;
    ratio(i) = msum(i) > 0 ? window / (msum(i) + padding(i)) : 0.0;
  }

  Tensor out(ws.channels, Ho, Wo);
  out.matrix().noalias() = weight.value().matrix() * cols;
  out.matrix().array().rowwise() *= ratio.array();
  if (bias.defined()) {
    out.matrix() += bias.value().matrix().col(0) * valid;
  }
  PartialConvResult result;
  result.mask = Tensor({1, Ho, Wo}, valid);

  const Var b = bias.defined() ? bias : Var(Tensor(ws.channels, 1, 1));
  if (!grad_enabled()) {
    result.output = Var(std::move(out));
    return result;
  }
  result.output = make_op(
      std::move(out), {x, weight, b},
      [cols = std::move(cols), ratio, valid, known_full, k, stride,
       pad](Node& self) {
        const Matrix& g = self.grad.matrix();
        if (wants(self, 2))
          self.inputs[2]->accumulate((g.array().rowwise() * valid.array())
                                         .rowwise()
                                         .sum()
                                         .matrix());
        if (!wants(self, 0) && !wants(self, 1)) return;
        Matrix gs = g;
        gs.array().rowwise() *= ratio.array();
        if (wants(self, 1)) self.inputs[1]->accumulate(gs * cols.transpose());
        if (wants(self, 0)) {
          Matrix dcols = self.inputs[1]->value.matrix().transpose() * gs;
          Tensor dxm(self.inputs[0]->value.shape());
          kernels::col2im_add<Real>(dcols, k, stride, pad, dxm);
          self.inputs[0]->accumulate(
              (dxm.array() * known_full.array()).matrix());
        }
      });
  return result;
}

// --- warping ---------------------------------------------------------------

Var warp(const Var& frame, const Var& flow) {
  const Shape& fs = frame.shape();
  if (flow.shape() != Shape{2, fs.height, fs.width}) {
    throw ShapeError("warp: flow " + to_string(flow.shape()) +
                     " incompatible with frame " + to_string(fs));
  }
  if (!flow.value().all_finite()) {
    throw NumericError("warp: non-finite flow values");
  }
  return make_op(kernels::warp_forward(frame.value(), flow.value()),
                 {frame, flow}, [](Node& self) {
                   Tensor* gf = wants(self, 0)
                                    ? &self.inputs[0]->grad_buffer()
                                    : nullptr;
                   Tensor* gw = wants(self, 1)
                                    ? &self.inputs[1]->grad_buffer()
                                    : nullptr;
                   kernels::warp_backward(self.inputs[0]->value,
                                          self.inputs[1]->value, self.grad, gf,
                                          gw);
                 });
}

// --- reductions --------------------------------------------------------------

Var masked_abs_sum(const Var& a, const Var& b, const Tensor& mask) {
  check_same(a, b, "masked_abs_sum");
  require_single_channel_map(mask, a.shape(), "masked_abs_sum");
  const auto m = as_row(mask).array();
  const Real total =
      ((a.value().array() - b.value().array()).abs().rowwise() * m).sum();
  return make_op(Tensor::scalar(total), {a, b}, [mask](Node& self) {
    const Real g = self.grad.item();
    const auto m = as_row(mask).array();
    const auto d = (self.inputs[0]->value.array() -
                    self.inputs[1]->value.array());
    Matrix s = ((d.sign() * g).rowwise() * m).matrix();
    if (wants(self, 0)) self.inputs[0]->accumulate(s);
    if (wants(self, 1)) self.inputs[1]->accumulate(-s);
  });
}

Var abs_sum(const Var& a, const Var& b) {
  check_same(a, b, "abs_sum");
  const Real total = (a.value().array() - b.value().array()).abs().sum();
  return make_op(Tensor::scalar(total), {a, b}, [](Node& self) {
    const Real g = self.grad.item();
    Matrix s = ((self.inputs[0]->value.array() -
                 self.inputs[1]->value.array())
                    .sign() *
                g)
                   .matrix();
    if (wants(self, 0)) self.inputs[0]->accumulate(s);
    if (wants(self, 1)) self.inputs[1]->accumulate(-s);
  });
}

Var dot(const Var& a, const Tensor& weights) {
  require_shape(weights.shape(), a.shape(), "dot");
  const Real total = (a.value().array() * weights.array()).sum();
  return make_op(Tensor::scalar(total), {a}, [weights](Node& self) {
    self.inputs[0]->accumulate(weights.matrix() * self.grad.item());
  });
}

Var sum(std::span<const Var> scalars) {
  Real total = 0;
  for (const Var& s : scalars) {
    if (s.value().size() != 1) throw ShapeError("sum: expects scalars");
    total += s.value().item();
  }
  return make_op_list(Tensor::scalar(total), scalars, [](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (wants(self, i)) self.inputs[i]->accumulate(self.grad.matrix());
  });
}

}  // namespace frvi::ad
