#pragma once

// Optical-flow utilities: the estimator contract with a classical
// coarse-to-fine default, backward warping, instance-wise normalisation and
// long-range flow.
//
// Convention: a flow F_{a,b} maps positions in frame a to frame b, so that
// warp(frame_a, F_{a,b}) samples frame_a at p - F(p) and lines up with
// frame_b.

#include <span>

#include "frvi/autograd.hpp"
#include "frvi/video.hpp"

namespace frvi {

enum class FlowMethod { Classical, GroundTruthPassthrough };
enum class LongRangeMode { Direct, Compose };

struct FlowEstimatorConfig {
  FlowMethod method = FlowMethod::Classical;
  int pyramid_levels = 3;
  int iterations = 40;            // Jacobi sweeps per warp per level
  double smoothness_weight = 0.004;
  int warps_per_level = 3;
};

// Pluggable estimator contract; implementations must be stateless.
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual FlowField estimate(const Frame& from, const Frame& to) const = 0;
};

// Pyramidal Horn-Schunck with per-level re-warping on luma.
class ClassicalFlowEstimator final : public FlowEstimator {
 public:
  explicit ClassicalFlowEstimator(FlowEstimatorConfig cfg = {});
  FlowField estimate(const Frame& from, const Frame& to) const override;
  const FlowEstimatorConfig& config() const { return cfg_; }

 private:
  FlowEstimatorConfig cfg_;
};

// Classical estimation between two frames. GroundTruthPassthrough needs a
// sequence; use estimate_step_flows for that.
FlowField estimate_flow(const Frame& from, const Frame& to,
                        const FlowEstimatorConfig& cfg = {});

// Flows t -> t+1 for t = 0..T-2. Passthrough returns seq.gt_flows verbatim.
std::vector<FlowField> estimate_step_flows(const VideoSequence& seq,
                                           const FlowEstimatorConfig& cfg = {});

// Differentiable-free backward warp (see kernels::warp_forward).
Frame warp(const Frame& frame, const FlowField& flow);

struct NormalizedFlow {
  Tensor values;  // (3, H, W) in [-1, 1]; channel 2 = mean of channels 0, 1
  double range_min = 0;
  double range_max = 0;
};

NormalizedFlow normalize_flow(const FlowField& flow);
FlowField denormalize_flow(const NormalizedFlow& nf);
// Differentiable inverse map for the first two channels of a network output
// expressed in the normalised domain of `like`.
ad::Var denormalize(const ad::Var& normalized_xy, const NormalizedFlow& like);
// Normalises `flow` with the range stored in `like` (no clipping).
Tensor normalize_with_range(const FlowField& flow, const NormalizedFlow& like);

// F_{a,c}(p) = F_{b,c}(p) + warp(F_{a,b}, F_{b,c})(p).
FlowField compose_flows(const FlowField& first, const FlowField& second);

// F_{from,to} over a frame list (0-based indices).
FlowField long_range_flow(std::span<const Frame> frames, int from, int to,
                          const FlowEstimatorConfig& cfg = {},
                          LongRangeMode mode = LongRangeMode::Direct);
// Sequence form; passthrough composes gt step flows (forward only).
FlowField long_range_flow(const VideoSequence& seq, int from, int to,
                          const FlowEstimatorConfig& cfg = {},
                          LongRangeMode mode = LongRangeMode::Direct);

}  // namespace frvi
