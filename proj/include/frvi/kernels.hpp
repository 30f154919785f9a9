#pragma once

// Scalar-generic numeric kernels shared by the autodiff layer and the
// classical flow estimator.

#include <algorithm>
#include <cmath>

#include "frvi/tensor.hpp"

namespace frvi::kernels {

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Unfolds k x k windows of x into columns: row (c*k + ky)*k + kx, column
// oy*Wout + ox. Out-of-bounds taps read zero.
template <typename Scalar>
void im2col(const Tensor3<Scalar>& x, int k, int stride, int pad,
            typename Tensor3<Scalar>::Matrix& cols) {
  const int C = x.channels(), H = x.height(), W = x.width();
  const int Ho = conv_out_size(H, k, stride, pad);
  const int Wo = conv_out_size(W, k, stride, pad);
  cols.setZero(C * k * k, Ho * Wo);
  for (int c = 0; c < C; ++c) {
    const Scalar* src = x.data() + static_cast<std::int64_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.data() +
                      static_cast<std::int64_t>((c * k + ky) * k + kx) *
                          Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            dst[oy * Wo + ox] = src[iy * W + ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back, accumulating into x.
template <typename Scalar>
void col2im_add(const typename Tensor3<Scalar>::Matrix& cols, int k,
                int stride, int pad, Tensor3<Scalar>& x) {
  const int C = x.channels(), H = x.height(), W = x.width();
  const int Ho = conv_out_size(H, k, stride, pad);
  const int Wo = conv_out_size(W, k, stride, pad);
  for (int c = 0; c < C; ++c) {
    Scalar* dst = x.data() + static_cast<std::int64_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.data() +
                            static_cast<std::int64_t>((c * k + ky) * k + kx) *
                                Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= W) continue;
            dst[iy * W + ix] += src[oy * Wo + ox];
          }
        }
      }
    }
  }
}

// Bilinear tap for backward warping with clamp-to-border addressing.
template <typename Scalar>
struct BilinearTap {
  int x0, x1, y0, y1;
  Scalar ax, ay;
  bool x_inside, y_inside;  // sample coordinate not clamped
};

template <typename Scalar>
BilinearTap<Scalar> bilinear_tap(Scalar sx, Scalar sy, int H, int W) {
  BilinearTap<Scalar> t{};
  const Scalar xmax = Scalar(W - 1), ymax = Scalar(H - 1);
  t.x_inside = sx >= Scalar(0) && sx <= xmax;
  t.y_inside = sy >= Scalar(0) && sy <= ymax;
  sx = std::clamp(sx, Scalar(0), xmax);
  sy = std::clamp(sy, Scalar(0), ymax);
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, W - 1);
  t.y1 = std::min(t.y0 + 1, H - 1);
  t.ax = sx - Scalar(t.x0);
  t.ay = sy - Scalar(t.y0);
  return t;
}

// output(c, p) = bilinear sample of frame at p - flow(p).
template <typename Scalar>
Tensor3<Scalar> warp_forward(const Tensor3<Scalar>& frame,
                             const Tensor3<Scalar>& flow) {
  const int C = frame.channels(), H = frame.height(), W = frame.width();
  Tensor3<Scalar> out(C, H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto t = bilinear_tap<Scalar>(Scalar(x) - flow(0, y, x),
                                          Scalar(y) - flow(1, y, x), H, W);
      const Scalar w00 = (Scalar(1) - t.ay) * (Scalar(1) - t.ax);
      const Scalar w01 = (Scalar(1) - t.ay) * t.ax;
      const Scalar w10 = t.ay * (Scalar(1) - t.ax);
      const Scalar w11 = t.ay * t.ax;
      for (int c = 0; c < C; ++c) {
        out(c, y, x) = w00 * frame(c, t.y0, t.x0) + w01 * frame(c, t.y0, t.x1) +
                       w10 * frame(c, t.y1, t.x0) + w11 * frame(c, t.y1, t.x1);
      }
    }
  }
  return out;
}

// Accumulates the vector-Jacobian product of warp_forward into the frame
// and flow gradients (either pointer may be null).
template <typename Scalar>
void warp_backward(const Tensor3<Scalar>& frame, const Tensor3<Scalar>& flow,
                   const Tensor3<Scalar>& grad_out, Tensor3<Scalar>* grad_frame,
                   Tensor3<Scalar>* grad_flow) {
  const int C = frame.channels(), H = frame.height(), W = frame.width();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto t = bilinear_tap<Scalar>(Scalar(x) - flow(0, y, x),
                                          Scalar(y) - flow(1, y, x), H, W);
      const Scalar w00 = (Scalar(1) - t.ay) * (Scalar(1) - t.ax);
      const Scalar w01 = (Scalar(1) - t.ay) * t.ax;
      const Scalar w10 = t.ay * (Scalar(1) - t.ax);
      const Scalar w11 = t.ay * t.ax;
      Scalar dsx = 0, dsy = 0;
      for (int c = 0; c < C; ++c) {
        const Scalar g = grad_out(c, y, x);
        if (grad_frame) {
          (*grad_frame)(c, t.y0, t.x0) += w00 * g;
          (*grad_frame)(c, t.y0, t.x1) += w01 * g;
          (*grad_frame)(c, t.y1, t.x0) += w10 * g;
          (*grad_frame)(c, t.y1, t.x1) += w11 * g;
        }
        if (grad_flow) {
          const Scalar f00 = frame(c, t.y0, t.x0), f01 = frame(c, t.y0, t.x1);
          const Scalar f10 = frame(c, t.y1, t.x0), f11 = frame(c, t.y1, t.x1);
          dsx += g * ((Scalar(1) - t.ay) * (f01 - f00) + t.ay * (f11 - f10));
          dsy += g * ((Scalar(1) - t.ax) * (f10 - f00) + t.ax * (f11 - f01));
        }
      }
      if (grad_flow) {
        // d(sample position)/d(flow) = -1 unless the coordinate was clamped.
        if (t.x_inside) (*grad_flow)(0, y, x) -= dsx;
        if (t.y_inside) (*grad_flow)(1, y, x) -= dsy;
      }
    }
  }
}

// 2x nearest-neighbour upsampling and its adjoint.
template <typename Scalar>
Tensor3<Scalar> upsample2x(const Tensor3<Scalar>& x) {
  Tensor3<Scalar> out(x.channels(), x.height() * 2, x.width() * 2);
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int xx = 0; xx < out.width(); ++xx)
        out(c, y, xx) = x(c, y / 2, xx / 2);
  return out;
}

template <typename Scalar>
void upsample2x_backward_add(const Tensor3<Scalar>& grad_out,
                             Tensor3<Scalar>& grad_in) {
  for (int c = 0; c < grad_out.channels(); ++c)
    for (int y = 0; y < grad_out.height(); ++y)
      for (int xx = 0; xx < grad_out.width(); ++xx)
        grad_in(c, y / 2, xx / 2) += grad_out(c, y, xx);
}

}  // namespace frvi::kernels
