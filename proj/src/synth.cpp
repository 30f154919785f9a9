#include <cmath>

#include "frvi/random.hpp"
#include "frvi/video.hpp"

namespace frvi {

namespace {

double texture_value(const SynthTexture& tex, int c, double u, double v) {
  double value = tex.base[c];
  for (int k = 0; k < 2; ++k) {
    const auto& w = tex.waves[2 * c + k];
    value += w[0] * std::sin(w[1] * u + w[2] * v + w[3]);
  }
  return std::clamp(value, 0.0, 1.0);
}

double center_x(const SynthShape& s, int t) { return s.cx + s.vx * t; }
double center_y(const SynthShape& s, int t) { return s.cy + s.vy * t; }

bool covers(const SynthShape& s, double x, double y, int t) {
  const double dx = x - center_x(s, t);
  const double dy = y - center_y(s, t);
  if (s.kind == SynthShape::Kind::Rect) {
    return std::abs(dx) <= s.half_w && std::abs(dy) <= s.half_h;
  }
  return dx * dx + dy * dy <= s.half_w * s.half_w;
}

// Index of the top-most shape covering (x, y) at frame t, or -1.
int top_shape(const SynthScene& scene, double x, double y, int t) {
  for (int i = static_cast<int>(scene.shapes.size()) - 1; i >= 0; --i) {
    if (covers(scene.shapes[i], x, y, t)) return i;
  }
  return -1;
}

float quantize(double v) { return static_cast<float>(v); }

}  // namespace

SynthTexture random_texture(std::uint64_t seed, double amplitude) {
  Rng rng(seed);
  SynthTexture tex;
  for (int c = 0; c < 3; ++c) {
    tex.base[c] = uniform(rng, 0.2 + 2 * amplitude, 0.8 - 2 * amplitude);
  }
  for (auto& w : tex.waves) {
    w[0] = uniform(rng, 0.5 * amplitude, amplitude);
    w[1] = uniform(rng, -0.9, 0.9);
    w[2] = uniform(rng, -0.9, 0.9);
    w[3] = uniform(rng, 0.0, 6.283185307179586);
  }
  return tex;
}

SynthScene random_scene(int num_shapes, int length, int height, int width,
                        std::uint64_t seed) {
  if (num_shapes < 0) throw InputError("random_scene: negative shape count");
  Rng rng(derive_seed(seed, {0x5ce4e}));
  SynthScene scene;
  scene.background = random_texture(rng(), 0.08);
  const int span = std::max(1, length - 1);
  for (int i = 0; i < num_shapes; ++i) {
    SynthShape s;
    s.kind = rng() % 2 == 0 ? SynthShape::Kind::Rect : SynthShape::Kind::Disc;
    const double lo = std::min(height, width) / 8.0;
    const double hi = std::min(height, width) / 4.0;
    s.half_w = uniform(rng, lo, hi);
    s.half_h = s.kind == SynthShape::Kind::Rect ? uniform(rng, lo, hi) : s.half_w;
    s.vx = uniform(rng, -1.5, 1.5);
    s.vy = uniform(rng, -1.5, 1.5);
    // Keep the centre inside the frame for the whole clip.
    auto place = [&](double& c, double& v, int extent) {
      const double margin = 0.15 * extent;
      double room = (extent - 1 - 2 * margin);
      if (std::abs(v) * span > room) v = std::copysign(room / span, v);
      const double travel = v * span;
      const double c_lo = margin - std::min(0.0, travel);
      const double c_hi = extent - 1 - margin - std::max(0.0, travel);
      c = uniform(rng, c_lo, std::max(c_lo, c_hi));
    };
    place(s.cx, s.vx, width);
    place(s.cy, s.vy, height);
    s.texture = random_texture(rng(), 0.1);
    scene.shapes.push_back(s);
  }
  return scene;
}

RenderedScene render_scene(const SynthScene& scene, int length, int height,
                           int width) {
  if (length < 2) throw InputError("synth video needs T >= 2");
  require_divisible(height, width);
  RenderedScene out;
  VideoSequence& v = out.video;
  std::vector<Frame> frames;
  std::vector<FlowField> flows;
  for (int t = 0; t < length; ++t) {
    Frame f(3, height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const int top = top_shape(scene, x, y, t);
        for (int c = 0; c < 3; ++c) {
          double value;
          if (top < 0) {
            value = texture_value(scene.background, c, x - scene.pan_x * t,
                                  y - scene.pan_y * t);
          } else {
            const SynthShape& s = scene.shapes[top];
            value = texture_value(s.texture, c, x - center_x(s, t),
                                  y - center_y(s, t));
          }
          f(c, y, x) = quantize(value);
        }
      }
    }
    frames.push_back(std::move(f));
  }
  for (int t = 1; t < length; ++t) {
    FlowField flow(2, height, width);
    Mask valid(1, height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const int top = top_shape(scene, x, y, t);
        double u = scene.pan_x, w = scene.pan_y;
        if (top >= 0) {
          u = scene.shapes[top].vx;
          w = scene.shapes[top].vy;
        }
        flow(0, y, x) = quantize(u);
        flow(1, y, x) = quantize(w);
        const double sx = x - u, sy = y - w;
        const bool inside =
            sx >= 0 && sx <= width - 1 && sy >= 0 && sy <= height - 1;
        valid(0, y, x) =
            inside && top_shape(scene, sx, sy, t - 1) == top ? 1.0 : 0.0;
      }
    }
    flows.push_back(std::move(flow));
    out.flow_valid.push_back(std::move(valid));
  }
  v.frames = frames;
  v.masks.assign(length, Mask(1, height, width));
  v.gt_frames = std::move(frames);
  v.gt_flows = std::move(flows);
  return out;
}

VideoSequence synth_video(int num_shapes, int length, int height, int width,
                          std::uint64_t seed) {
  if (length < 2) throw InputError("synth_video: T must be >= 2");
  require_divisible(height, width);
  return render_scene(random_scene(num_shapes, length, height, width, seed),
                      length, height, width)
      .video;
}

}  // namespace frvi
