#include "frvi/flow.hpp"

#include <cmath>

#include "frvi/kernels.hpp"

namespace frvi {

namespace {

using Image = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Image luma(const Frame& f) {
  Image out = Image::Zero(f.height(), f.width());
  for (int c = 0; c < f.channels(); ++c) {
    out += Eigen::Map<const Image>(f.data() + static_cast<std::int64_t>(c) * f.shape().plane(),
                                   f.height(), f.width());
  }
  return out / f.channels();
}

Tensor as_tensor(const Image& img) {
  Tensor t(1, static_cast<int>(img.rows()), static_cast<int>(img.cols()));
  Eigen::Map<Image>(t.data(), img.rows(), img.cols()) = img;
  return t;
}

Image downsample(const Image& img) {
  const auto H = img.rows() / 2, W = img.cols() / 2;
  Image out(H, W);
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x)
      out(y, x) = 0.25 * (img(2 * y, 2 * x) + img(2 * y, 2 * x + 1) +
                          img(2 * y + 1, 2 * x) + img(2 * y + 1, 2 * x + 1));
  return out;
}

// Bilinear 2x upsampling of a flow component, scaled to the finer grid.
Image upsample_flow(const Image& u, Eigen::Index H, Eigen::Index W) {
  Image out(H, W);
  const auto h = u.rows(), w = u.cols();
  for (Eigen::Index y = 0; y < H; ++y) {
    const double sy = std::clamp((y + 0.5) / 2.0 - 0.5, 0.0, double(h - 1));
    const auto y0 = static_cast<Eigen::Index>(sy);
    const auto y1 = std::min(y0 + 1, h - 1);
    const double ay = sy - y0;
    for (Eigen::Index x = 0; x < W; ++x) {
      const double sx = std::clamp((x + 0.5) / 2.0 - 0.5, 0.0, double(w - 1));
      const auto x0 = static_cast<Eigen::Index>(sx);
      const auto x1 = std::min(x0 + 1, w - 1);
      const double ax = sx - x0;
      out(y, x) = 2.0 * ((1 - ay) * ((1 - ax) * u(y0, x0) + ax * u(y0, x1)) +
                         ay * ((1 - ax) * u(y1, x0) + ax * u(y1, x1)));
    }
  }
  return out;
}

Image grad_x(const Image& img) {
  const auto W = img.cols();
  Image g(img.rows(), W);
  if (W == 1) return Image::Zero(img.rows(), 1);
  g.col(0) = img.col(1) - img.col(0);
  g.col(W - 1) = img.col(W - 1) - img.col(W - 2);
  if (W > 2) g.middleCols(1, W - 2) = 0.5 * (img.rightCols(W - 2) - img.leftCols(W - 2));
  return g;
}

Image grad_y(const Image& img) {
  const auto H = img.rows();
  Image g(H, img.cols());
  if (H == 1) return Image::Zero(1, img.cols());
  g.row(0) = img.row(1) - img.row(0);
  g.row(H - 1) = img.row(H - 1) - img.row(H - 2);
  if (H > 2) g.middleRows(1, H - 2) = 0.5 * (img.bottomRows(H - 2) - img.topRows(H - 2));
  return g;
}

// Mean of the 4-neighbourhood with replicated borders.
Image neighbour_mean(const Image& u) {
  const auto H = u.rows(), W = u.cols();
  Image acc = Image::Zero(H, W);
  Image s = u;
  if (H > 1) s.bottomRows(H - 1) = u.topRows(H - 1);
  acc += s;
  s = u;
  if (H > 1) s.topRows(H - 1) = u.bottomRows(H - 1);
  acc += s;
  s = u;
  if (W > 1) s.rightCols(W - 1) = u.leftCols(W - 1);
  acc += s;
  s = u;
  if (W > 1) s.leftCols(W - 1) = u.rightCols(W - 1);
  acc += s;
  return 0.25 * acc;
}

Image warp_image(const Image& img, const Image& u, const Image& v) {
  Tensor flow(2, static_cast<int>(u.rows()), static_cast<int>(u.cols()));
  Eigen::Map<Image>(flow.data(), u.rows(), u.cols()) = u;
  Eigen::Map<Image>(flow.data() + flow.shape().plane(), u.rows(), u.cols()) = v;
  const Tensor w = kernels::warp_forward(as_tensor(img), flow);
  return Eigen::Map<const Image>(w.data(), img.rows(), img.cols());
}

}  // namespace

ClassicalFlowEstimator::ClassicalFlowEstimator(FlowEstimatorConfig cfg)
    : cfg_(cfg) {
  if (cfg_.pyramid_levels < 1 || cfg_.iterations < 1 ||
      cfg_.warps_per_level < 1 || !(cfg_.smoothness_weight > 0)) {
    throw InputError("flow estimator: invalid configuration");
  }
}

FlowField ClassicalFlowEstimator::estimate(const Frame& from,
                                           const Frame& to) const {
  require_shape(to.shape(), from.shape(), "estimate_flow");
  if (!from.all_finite() || !to.all_finite()) {
    throw NumericError("estimate_flow: non-finite input frame");
  }
  std::vector<Image> pa{luma(from)}, pb{luma(to)};
  for (int l = 1; l < cfg_.pyramid_levels; ++l) {
    const Image& a = pa.back();
    if (a.rows() % 2 || a.cols() % 2 || a.rows() < 8 || a.cols() < 8) break;
    pa.push_back(downsample(a));
    pb.push_back(downsample(pb.back()));
  }

  Image u, v;
  for (int level = static_cast<int>(pa.size()) - 1; level >= 0; --level) {
    const Image& a = pa[level];
    const Image& b = pb[level];
    if (u.size() == 0) {
      u = Image::Zero(a.rows(), a.cols());
      v = Image::Zero(a.rows(), a.cols());
    } else {
      u = upsample_flow(u, a.rows(), a.cols());
      v = upsample_flow(v, a.rows(), a.cols());
    }
    const Image bx = grad_x(b), by = grad_y(b);
    for (int w = 0; w < cfg_.warps_per_level; ++w) {
      const Image aw = warp_image(a, u, v);
      // Linearised constancy: Ix du + Iy dv + (b - aw) = 0.
      const Image ix = 0.5 * (grad_x(aw) + bx);
      const Image iy = 0.5 * (grad_y(aw) + by);
      const Image it = b - aw;
      const Image denom = cfg_.smoothness_weight + ix.square() + iy.square();
      const Image u0 = u, v0 = v;
      for (int k = 0; k < cfg_.iterations; ++k) {
        const Image ub = neighbour_mean(u), vb = neighbour_mean(v);
        const Image r = (ix * (ub - u0) + iy * (vb - v0) + it) / denom;
        u = ub - ix * r;
        v = vb - iy * r;
      }
    }
  }

  const double bound = std::max(from.height(), from.width());
  FlowField flow(2, from.height(), from.width());
  Eigen::Map<Image>(flow.data(), u.rows(), u.cols()) = u.cwiseMax(-bound).cwiseMin(bound);
  Eigen::Map<Image>(flow.data() + flow.shape().plane(), v.rows(), v.cols()) =
      v.cwiseMax(-bound).cwiseMin(bound);
  return flow;
}

FlowField estimate_flow(const Frame& from, const Frame& to,
                        const FlowEstimatorConfig& cfg) {
  if (cfg.method != FlowMethod::Classical) {
    throw InputError(
        "estimate_flow: ground-truth passthrough needs a sequence with gt "
        "flows");
  }
  return ClassicalFlowEstimator(cfg).estimate(from, to);
}

std::vector<FlowField> estimate_step_flows(const VideoSequence& seq,
                                           const FlowEstimatorConfig& cfg) {
  if (cfg.method == FlowMethod::GroundTruthPassthrough) {
    if (!seq.gt_flows) throw InputError("passthrough: sequence has no gt flows");
    return *seq.gt_flows;
  }
  const ClassicalFlowEstimator est(cfg);
  std::vector<FlowField> flows;
  for (int t = 0; t + 1 < seq.length(); ++t) {
    flows.push_back(est.estimate(seq.frames[t], seq.frames[t + 1]));
  }
  return flows;
}

Frame warp(const Frame& frame, const FlowField& flow) {
  if (flow.shape() != Shape{2, frame.height(), frame.width()}) {
    throw ShapeError("warp: flow " + to_string(flow.shape()) +
                     " incompatible with frame " + to_string(frame.shape()));
  }
  if (!flow.all_finite()) throw NumericError("warp: non-finite flow values");
  return kernels::warp_forward(frame, flow);
}

NormalizedFlow normalize_flow(const FlowField& flow) {
  if (flow.channels() != 2) throw ShapeError("normalize_flow: need 2 channels");
  if (!flow.all_finite()) throw NumericError("normalize_flow: non-finite flow");
  NormalizedFlow nf;
  nf.range_min = flow.matrix().minCoeff();
  nf.range_max = flow.matrix().maxCoeff();
  nf.values = Tensor(3, flow.height(), flow.width());
  nf.values.matrix().topRows(2) = normalize_with_range(flow, nf).matrix();
  nf.values.matrix().row(2) =
      0.5 * (nf.values.matrix().row(0) + nf.values.matrix().row(1));
  return nf;
}

Tensor normalize_with_range(const FlowField& flow, const NormalizedFlow& like) {
  const double span = like.range_max - like.range_min;
  if (span == 0.0) return Tensor(flow.shape());
  return Tensor(flow.shape(),
                ((flow.array() - like.range_min) * (2.0 / span) - 1.0).matrix());
}

FlowField denormalize_flow(const NormalizedFlow& nf) {
  const Shape s{2, nf.values.height(), nf.values.width()};
  const double span = nf.range_max - nf.range_min;
  if (span == 0.0) return FlowField::constant(s, nf.range_min);
  // Same operation order as the differentiable denormalize().
  return FlowField(s, (nf.values.matrix().topRows(2).array() * (0.5 * span) +
                       (0.5 * span + nf.range_min))
                          .matrix());
}

ad::Var denormalize(const ad::Var& normalized_xy, const NormalizedFlow& like) {
  const double span = like.range_max - like.range_min;
  const Tensor offset = Tensor::constant(normalized_xy.shape(),
                                         0.5 * span + like.range_min);
  return ad::add(ad::scale(normalized_xy, 0.5 * span), ad::constant(offset));
}

FlowField compose_flows(const FlowField& first, const FlowField& second) {
  require_shape(second.shape(), first.shape(), "compose_flows");
  FlowField out = warp(first, second);
  out.matrix() += second.matrix();
  return out;
}

FlowField long_range_flow(std::span<const Frame> frames, int from, int to,
                          const FlowEstimatorConfig& cfg, LongRangeMode mode) {
  const int T = static_cast<int>(frames.size());
  if (from < 0 || to < 0 || from >= T || to >= T) {
    throw InputError("long_range_flow: index out of range");
  }
  const Shape s = frames[from].shape();
  if (from == to) return FlowField(2, s.height, s.width);
  if (cfg.method != FlowMethod::Classical) {
    throw InputError("long_range_flow: frame-list form needs the classical estimator");
  }
  const ClassicalFlowEstimator est(cfg);
  if (mode == LongRangeMode::Direct) return est.estimate(frames[from], frames[to]);
  const int dir = to > from ? 1 : -1;
  FlowField acc = est.estimate(frames[from], frames[from + dir]);
  for (int k = from + dir; k != to; k += dir) {
    acc = compose_flows(acc, est.estimate(frames[k], frames[k + dir]));
  }
  return acc;
}

FlowField long_range_flow(const VideoSequence& seq, int from, int to,
                          const FlowEstimatorConfig& cfg, LongRangeMode mode) {
  if (cfg.method == FlowMethod::Classical) {
    return long_range_flow(std::span<const Frame>(seq.frames), from, to, cfg, mode);
  }
  if (!seq.gt_flows) throw InputError("passthrough: sequence has no gt flows");
  if (from < 0 || to < 0 || from >= seq.length() || to >= seq.length()) {
    throw InputError("long_range_flow: index out of range");
  }
  const Shape s = seq.frame_shape();
  if (from == to) return FlowField(2, s.height, s.width);
  if (to < from) {
    throw InputError("passthrough long-range flow is only defined forward in time");
  }
  FlowField acc = seq.gt_flows->at(from);
  for (int k = from + 1; k < to; ++k) acc = compose_flows(acc, seq.gt_flows->at(k));
  return acc;
}

}  // namespace frvi
