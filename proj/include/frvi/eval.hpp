#pragma once

// Metrics and the ablation driver.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "frvi/training.hpp"

namespace frvi {

// Mean absolute error over hole pixels (all channels, all frames), x255.
double eval_l1(std::span<const Frame> outputs, std::span<const Frame> gt,
               std::span<const Mask> masks);

// Mean over t = 1..T-1 of the mean |O_t - warp(O_{t-1}, gt_flows[t-1])| over
// pixels where weights[t] = 1 (all pixels when weights is empty). Steps with
// no weighted pixel are skipped.
double eval_warp_error(std::span<const Frame> outputs, std::span<const FlowField> gt_flows,
                       std::span<const Mask> weights = {});

// FNV-1a over the raw bytes of every frame, mask and flow.
std::uint64_t data_hash(const std::vector<VideoSequence>& data);

struct EvalReport {
  Variant variant = Variant::Ours;
  std::string mask_type;
  double l1 = 0;
  double warp_error = 0;
  std::int64_t params = 0;
  double ms_per_frame = 0;
  std::uint64_t data_hash = 0;
  std::string error;  // non-empty when the variant failed
};

// Region used by the warp-error metric: hole pixels whose gt flow is valid.
std::vector<Mask> warp_error_weights(const VideoSequence& seq,
                                     const std::vector<Mask>& flow_valid);

EvalReport evaluate(const Model& model, Variant variant, const std::vector<VideoSequence>& data,
                    const std::vector<std::vector<Mask>>& flow_valid,
                    const PipelineOptions& opts);

// Parameters of the networks a variant actually uses.
std::int64_t variant_params(const Model& model, Variant variant);

struct AblationConfig {
  TrainConfig train;   // shared data/training settings; variant is overridden
  DataConfig eval;     // held-out evaluation set
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
};

struct AblationResult {
  std::vector<EvalReport> rows;
  Checkpoint pretrained;  // shared H_s / H_c
};

// Pretrains H_s and H_c once (unless `pretrained` is given), then trains the
// recurrent stage of every variant from that checkpoint and evaluates all of
// them on the same evaluation set. A variant that fails is reported with its
// error and the others continue. `trained` may supply already trained
// checkpoints for some variants.
AblationResult run_ablation(const AblationConfig& cfg,
                            std::optional<Checkpoint> pretrained = std::nullopt,
                            const std::vector<std::pair<Variant, Checkpoint>>& trained = {},
                            std::ostream* log = nullptr);

void write_csv(std::ostream& os, const std::vector<EvalReport>& rows);
void write_table(std::ostream& os, const std::vector<EvalReport>& rows);

}  // namespace frvi
