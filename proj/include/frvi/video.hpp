#pragma once

// Video data model: frames, hole masks, flow fields, sequences, mask
// generators and the synthetic moving-shapes dataset.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "frvi/tensor.hpp"

namespace frvi {

using Frame = Tensor;      // (3, H, W), values in [0, 1]
using Mask = Tensor;       // (1, H, W), 1 = missing pixel, 0 = known
using FlowField = Tensor;  // (2, H, W) in pixels; channel 0 = x, 1 = y

inline constexpr int kFrameChannels = 3;
inline constexpr int kUNetDepth = 3;
inline constexpr Real kHoleFill = 0.0;

void validate_frame(const Frame& frame, int depth = kUNetDepth);
void validate_mask(const Mask& mask, const Shape& frame_shape);
void validate_flow(const FlowField& flow);
// Throws ShapeError unless H and W are divisible by 2^depth.
void require_divisible(int height, int width, int depth = kUNetDepth);

struct VideoSequence {
  std::vector<Frame> frames;
  std::vector<Mask> masks;
  std::optional<std::vector<Frame>> gt_frames;
  std::optional<std::vector<FlowField>> gt_flows;  // [t] = flow t -> t+1

  int length() const { return static_cast<int>(frames.size()); }
  Shape frame_shape() const;
  void validate() const;
};

// Pixels with mask 1 are replaced by the hole fill value.
Frame apply_mask(const Frame& frame, const Mask& mask);
// 1 - holes: the "known" convention used inside partial convolutions.
Mask known_from_holes(const Mask& holes);
Mask union_holes(const Mask& a, const Mask& b);
std::int64_t hole_count(const Mask& mask);

// --- mask generators --------------------------------------------------------

enum class MaskKind { FixedRect, RandomRect, RandomWalker };

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& text);

struct WalkerParams {
  int num_strokes = 6;
  int min_steps = 30;
  int max_steps = 90;
  double max_turn_degrees = 30.0;
  int min_width = 2;
  int max_width = 6;
};

struct MaskSpec {
  MaskKind kind = MaskKind::FixedRect;
  int frame_size = 128;  // l; masks are l x l
  std::uint64_t seed = 0;
  WalkerParams walker;
};

// Rectangle side bounds [floor(0.375 l), floor(0.5 l)].
int min_rect_side(int frame_size);
int max_rect_side(int frame_size);

std::vector<Mask> generate_masks(const MaskSpec& spec, int length);

// --- synthetic dataset ------------------------------------------------------

struct SynthTexture {
  std::array<double, 3> base{0.5, 0.5, 0.5};
  // Two sinusoidal components per channel: amplitude, fx, fy, phase.
  std::array<std::array<double, 4>, 6> waves{};
};

struct SynthShape {
  enum class Kind { Rect, Disc } kind = Kind::Rect;
  double cx = 0, cy = 0;           // centre at frame 0
  double half_w = 4, half_h = 4;   // radius = half_w for discs
  double vx = 0, vy = 0;           // pixels per frame
  SynthTexture texture;
};

struct SynthScene {
  SynthTexture background;
  double pan_x = 0, pan_y = 0;  // global background motion per frame
  std::vector<SynthShape> shapes;
};

struct RenderedScene {
  VideoSequence video;
  // [t] = 1 where warping gt frame t by gt flow t -> t+1 is well defined
  // (excludes disocclusions and samples from outside the frame).
  std::vector<Mask> flow_valid;
};

SynthTexture random_texture(std::uint64_t seed, double amplitude);
SynthScene random_scene(int num_shapes, int length, int height, int width,
                        std::uint64_t seed);
RenderedScene render_scene(const SynthScene& scene, int length, int height,
                           int width);
// Complete frames (frames == gt_frames), empty masks, analytic gt flows.
VideoSequence synth_video(int num_shapes, int length, int height, int width,
                          std::uint64_t seed);

// --- native container I/O ---------------------------------------------------

enum class RasterType { Float32, Float64 };

struct RasterHeader {
  Shape shape;
  RasterType type = RasterType::Float32;
  std::optional<std::array<double, 2>> range;  // normalised-flow metadata
};

// Raw little-endian channel-first raster plus a "<path>.hdr" text sidecar.
void write_raster(const std::string& path, const Tensor& tensor,
                  RasterType type = RasterType::Float32,
                  std::optional<std::array<double, 2>> range = std::nullopt);
Tensor read_raster(const std::string& path, RasterHeader* header = nullptr);

// Raw payload only; caller supplies the shape.
void write_raw(const std::string& path, const Tensor& tensor, RasterType type);
Tensor read_raw(const std::string& path, const Shape& shape, RasterType type);

void write_video(const VideoSequence& seq, const std::string& dir);
VideoSequence read_video(const std::string& dir);

// 8-bit binary PPM (P6) / PGM (P5). Frames scale to [0, 1]; masks map any
// nonzero sample to 1.
Frame read_ppm(const std::string& path);
Mask read_pgm_mask(const std::string& path);
void write_ppm(const std::string& path, const Frame& frame);
// Imports "*.ppm" frames (sorted by name) and optional "*.pgm" masks.
VideoSequence import_image_sequence(const std::string& frames_dir,
                                    const std::string& masks_dir = "");

}  // namespace frvi
