#pragma once

// The frame-recurrent pipeline shared by training, streaming inference and
// evaluation:
//   P_t   = H_s(I_t)
//   F^P   = F_l(P_{t-1}, P_t),  F̂^I = F_l(I_{t-1}, I_t),  F^I = H_c(F̂^I)
//   F     = H_f(F^P, F^I)
//   O_1   = P_1,  O_t = refine(O_{t-1}, P_t)

#include <array>
#include <string>
#include <vector>

#include "frvi/flow.hpp"
#include "frvi/nets.hpp"
#include "frvi/video.hpp"

namespace frvi {

enum class Variant { Ours, PartialConvOnly, ConvLSTMOnly, FPOnly, FIOnly };

inline constexpr std::array<Variant, 5> kAllVariants = {
    Variant::Ours, Variant::PartialConvOnly, Variant::ConvLSTMOnly, Variant::FPOnly,
    Variant::FIOnly};

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);
// Whether the variant has a trained recurrent stage.
bool uses_refiner(Variant v);

struct PipelineOptions {
  FlowEstimatorConfig flow;
  LongRangeMode long_range = LongRangeMode::Direct;
  Variant variant = Variant::Ours;
};

// Flow inputs of one step t-1 -> t.
struct StepFlows {
  FlowField fp;        // F^P
  FlowField fhat_i;    // F̂^I, estimated on the holed inputs
  NormalizedFlow normalized;
  Mask holes;          // union of M_{t-1} and M_t
  FlowField fi;        // F^I = H_c(F̂^I)
};

// gt (optional) is used only by the ground-truth passthrough estimator.
StepFlows compute_step_flows(const Model& model, const Frame& prev_inpainted,
                             const Frame& inpainted, const Frame& prev_input,
                             const Frame& input, const Mask& prev_mask, const Mask& mask,
                             const FlowEstimatorConfig& cfg, const FlowField* gt = nullptr);

// The F used for the temporal losses under each variant.
ad::Var select_flow(const Model& model, Variant variant, const FlowField& fp,
                    const FlowField& fi);

// Everything computed by the frozen H_s / H_c stage for one clip.
struct ClipInputs {
  std::vector<Frame> inputs;     // I_t (holes zero-filled)
  std::vector<Frame> inpainted;  // sequence fed to refine (P_t, or P_1, I_2.., P_T)
  std::vector<Mask> masks;
  std::vector<Frame> targets;    // G_t when available
  std::vector<FlowField> fp, fi;             // T-1
  std::vector<FlowField> gt_flows;           // T-1 when available
  std::vector<FlowField> reverse;            // F_{t+1,t}, T-1
  std::vector<FlowField> to_first, to_last;  // T
};

// Runs H_s and the flow stage without gradients. with_training_flows adds the
// reverse and long-range flows. Backward-in-time flows always use the
// classical estimator.
ClipInputs prepare_clip(const Model& model, const VideoSequence& seq,
                        const PipelineOptions& opts, bool with_training_flows);

struct ClipOutputs {
  std::vector<ad::Var> outputs;  // O_t
  std::vector<ad::Var> flows;    // F_{t,t+1} per variant
};

// Differentiable unroll of the recurrent stage (BPTT when grads are on).
ClipOutputs run_clip(const Model& model, const ClipInputs& clip, Variant variant);

// No-grad convenience: completed frames of a whole sequence.
std::vector<Frame> complete_video(const Model& model, const VideoSequence& seq,
                                  const PipelineOptions& opts);

}  // namespace frvi
