#include "frvi/video.hpp"

#include <cmath>

namespace frvi {

void require_divisible(int height, int width, int depth) {
  const int unit = 1 << depth;
  if (height <= 0 || width <= 0 || height % unit != 0 || width % unit != 0) {
    throw ShapeError("frame size " + std::to_string(height) + "x" +
                     std::to_string(width) + " is not divisible by " +
                     std::to_string(unit) + "; pad the input explicitly");
  }
}

void validate_frame(const Frame& frame, int depth) {
  if (frame.channels() != kFrameChannels) {
    throw ShapeError("frame must have 3 channels, got " +
                     to_string(frame.shape()));
  }
  require_divisible(frame.height(), frame.width(), depth);
  if (!frame.all_finite()) throw NumericError("frame has non-finite values");
  if (frame.size() > 0 &&
      (frame.matrix().minCoeff() < 0.0 || frame.matrix().maxCoeff() > 1.0)) {
    throw InputError("frame values must lie in [0, 1]");
  }
}

void validate_mask(const Mask& mask, const Shape& frame_shape) {
  if (mask.channels() != 1 || mask.height() != frame_shape.height ||
      mask.width() != frame_shape.width) {
    throw ShapeError("mask shape " + to_string(mask.shape()) +
                     " does not match frame " + to_string(frame_shape));
  }
  if (!((mask.array() == 0.0) || (mask.array() == 1.0)).all()) {
    throw InputError("mask values must be exactly 0 or 1");
  }
}

void validate_flow(const FlowField& flow) {
  if (flow.channels() != 2) {
    throw ShapeError("flow must have 2 channels, got " +
                     to_string(flow.shape()));
  }
  if (!flow.all_finite()) throw NumericError("flow has non-finite values");
  const double bound = std::max(flow.height(), flow.width());
  if (flow.size() > 0 && flow.matrix().cwiseAbs().maxCoeff() > bound) {
    throw NumericError("flow magnitude exceeds frame size");
  }
}

Shape VideoSequence::frame_shape() const {
  if (frames.empty()) return {};
  return frames.front().shape();
}

void VideoSequence::validate() const {
  if (frames.size() < 2) throw InputError("video needs at least 2 frames");
  if (masks.size() != frames.size()) {
    throw ShapeError("video has " + std::to_string(frames.size()) +
                     " frames but " + std::to_string(masks.size()) + " masks");
  }
  const Shape s = frame_shape();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    require_shape(frames[t].shape(), s, "video frame");
    validate_frame(frames[t]);
    validate_mask(masks[t], s);
  }
  if (gt_frames) {
    if (gt_frames->size() != frames.size()) {
      throw ShapeError("gt_frames length does not match frames");
    }
    for (const Frame& g : *gt_frames) require_shape(g.shape(), s, "gt frame");
  }
  if (gt_flows) {
    if (gt_flows->size() + 1 != frames.size()) {
      throw ShapeError("gt_flows must have T - 1 entries");
    }
    for (const FlowField& f : *gt_flows) {
      require_shape(f.shape(), Shape{2, s.height, s.width}, "gt flow");
      validate_flow(f);
    }
  }
}

Frame apply_mask(const Frame& frame, const Mask& mask) {
  validate_mask(mask, frame.shape());
  Frame out = frame;
  const auto holes = Eigen::Map<const Eigen::Array<Real, 1, Eigen::Dynamic>>(
      mask.data(), mask.shape().plane());
  for (int c = 0; c < out.channels(); ++c) {
    out.matrix().row(c) =
        (holes > 0.5).select(kHoleFill, frame.matrix().row(c).array()).matrix();
  }
  return out;
}

Mask known_from_holes(const Mask& holes) {
  return Mask(holes.shape(), (1.0 - holes.array()).matrix());
}

Mask union_holes(const Mask& a, const Mask& b) {
  require_shape(b.shape(), a.shape(), "union_holes");
  return Mask(a.shape(), a.array().max(b.array()).matrix());
}

std::int64_t hole_count(const Mask& mask) {
  return static_cast<std::int64_t>((mask.array() > 0.5).count());
}

}  // namespace frvi
