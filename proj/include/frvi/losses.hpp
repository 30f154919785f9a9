#pragma once

// Training objectives. Every term is a mean over its contributing elements:
// masked pixel-channels for the frame terms, feature elements for the
// perceptual term, flow elements for the flow term. An empty support yields 0.
//
// Index conventions (0-based, T frames):
//   flows[k]         F_{k,k+1}, k = 0..T-2
//   reverse_flows[k] F_{k+1,k}
//   to_first[t]      F_{t,0},   to_last[t] F_{t,T-1}, t = 0..T-1

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frvi/autograd.hpp"
#include "frvi/nets.hpp"
#include "frvi/video.hpp"

namespace frvi {

struct LossWeights {
  double lambda_s = 10;
  double lambda_d = 10;
  double lambda_r = 10;
  double lambda_f = 1;
  double lambda_p = 1;
  double lambda_l = 1;
  // Extra full-frame l1 inside L_d; 0 keeps L_d hole-only.
  double full_frame = 0;

  bool operator==(const LossWeights&) const = default;
};

ad::Var loss_d(std::span<const ad::Var> outputs, std::span<const Frame> targets,
               std::span<const Mask> masks, double full_frame_weight = 0);
ad::Var loss_p(std::span<const ad::Var> outputs, std::span<const Frame> targets,
               const FeatureExtractor& extractor);
ad::Var loss_short(std::span<const ad::Var> outputs, std::span<const ad::Var> flows,
                   std::span<const Mask> masks);
// Pairs (O_{t-1}, warp(O_t, F_{t,t-1})) weighted by M_t.
ad::Var loss_reverse(std::span<const ad::Var> outputs,
                     std::span<const ad::Var> reverse_flows, std::span<const Mask> masks);
ad::Var loss_long(std::span<const ad::Var> outputs, std::span<const ad::Var> to_first,
                  std::span<const ad::Var> to_last, std::span<const Mask> masks);
ad::Var loss_flow(std::span<const ad::Var> flows, std::span<const FlowField> gt_flows);

struct LossCounts {
  double d = 0, p = 0, s = 0, r = 0, l = 0, f = 0;
};

struct LossReport {
  std::int64_t step = 0;
  double d = 0, p = 0, s = 0, r = 0, l = 0, f = 0;
  double total = 0;
  LossCounts counts;  // contributing elements per term

  double weighted(const LossWeights& w) const;
  std::string to_line() const;
  static LossReport parse_line(const std::string& line);
};

std::ostream& operator<<(std::ostream& os, const LossReport& report);

// Any field may be left empty; the matching term is then skipped (reported
// as 0) and must carry zero weight or an InputError is thrown.
struct LossInputs {
  std::vector<ad::Var> outputs;
  std::vector<Frame> targets;
  std::vector<Mask> masks;
  std::vector<ad::Var> flows;
  std::vector<FlowField> gt_flows;
  std::vector<ad::Var> reverse_flows;
  std::vector<ad::Var> to_first, to_last;
  const FeatureExtractor* extractor = nullptr;
  // Cut temporal-loss gradients from the flows.
  bool flow_detach = true;
};

struct LossResult {
  ad::Var total;
  LossReport report;
};

// Terms with zero weight are not evaluated.
LossResult total_loss(const LossInputs& in, const LossWeights& weights);

}  // namespace frvi
