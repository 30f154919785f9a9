#include <cmath>
#include <numbers>

#include "frvi/random.hpp"
#include "frvi/video.hpp"

namespace frvi {

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::FixedRect:
      return "fixed_rect";
    case MaskKind::RandomRect:
      return "random_rect";
    case MaskKind::RandomWalker:
      return "random_walker";
  }
  return "unknown";
}

MaskKind parse_mask_kind(const std::string& text) {
  if (text == "fixed_rect" || text == "FixedRect") return MaskKind::FixedRect;
  if (text == "random_rect" || text == "RandomRect") return MaskKind::RandomRect;
  if (text == "random_walker" || text == "RandomWalker")
    return MaskKind::RandomWalker;
  throw InputError("unknown mask kind '" + text + "'");
}

int min_rect_side(int frame_size) { return (3 * frame_size) / 8; }
int max_rect_side(int frame_size) { return frame_size / 2; }

namespace {

Mask random_square(Rng& rng, int l) {
  const int side = uniform_int(rng, min_rect_side(l), max_rect_side(l));
  const int x0 = uniform_int(rng, 0, l - side);
  const int y0 = uniform_int(rng, 0, l - side);
  Mask m(1, l, l);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) m(0, y, x) = 1.0;
  return m;
}

void stamp_disc(Mask& m, double cx, double cy, double radius) {
  const int l = m.width();
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x_hi = std::min(l - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y_hi = std::min(l - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) m(0, y, x) = 1.0;
    }
  }
}

// Union of random-walk strokes: unit steps, heading perturbed by at most
// max_turn_degrees per step, reflected at the frame border.
Mask random_walker(Rng& rng, int l, const WalkerParams& p) {
  Mask m(1, l, l);
  const double max_turn = p.max_turn_degrees * std::numbers::pi / 180.0;
  const double hi = static_cast<double>(l - 1);
  for (int s = 0; s < p.num_strokes; ++s) {
    const int steps = uniform_int(rng, p.min_steps, p.max_steps);
    const double radius = 0.5 * uniform_int(rng, p.min_width, p.max_width);
    double x = uniform(rng, 0.0, hi);
    double y = uniform(rng, 0.0, hi);
    double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    stamp_disc(m, x, y, radius);
    for (int i = 0; i < steps; ++i) {
      heading += uniform(rng, -max_turn, max_turn);
      x += std::cos(heading);
      y += std::sin(heading);
      if (x < 0 || x > hi) {
        x = std::clamp(x < 0 ? -x : 2 * hi - x, 0.0, hi);
        heading = std::numbers::pi - heading;
      }
      if (y < 0 || y > hi) {
        y = std::clamp(y < 0 ? -y : 2 * hi - y, 0.0, hi);
        heading = -heading;
      }
      stamp_disc(m, x, y, radius);
    }
  }
  return m;
}

}  // namespace

std::vector<Mask> generate_masks(const MaskSpec& spec, int length) {
  if (length < 1) throw InputError("generate_masks: T must be >= 1");
  if (spec.frame_size < 16) {
    throw InputError("generate_masks: frame_size must be >= 16");
  }
  const WalkerParams& w = spec.walker;
  if (spec.kind == MaskKind::RandomWalker &&
      (w.num_strokes < 1 || w.min_steps < 1 || w.max_steps < w.min_steps ||
       w.min_width < 1 || w.max_width < w.min_width)) {
    throw InputError("generate_masks: invalid walker parameters");
  }
  Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.kind)}));
  std::vector<Mask> masks;
  masks.reserve(length);
  switch (spec.kind) {
    case MaskKind::FixedRect: {
      const Mask m = random_square(rng, spec.frame_size);
      masks.assign(length, m);
      break;
    }
    case MaskKind::RandomRect:
      for (int t = 0; t < length; ++t)
        masks.push_back(random_square(rng, spec.frame_size));
      break;
    case MaskKind::RandomWalker:
      for (int t = 0; t < length; ++t)
        masks.push_back(random_walker(rng, spec.frame_size, w));
      break;
  }
  return masks;
}

}  // namespace frvi
