#pragma once

// Two-stage training: pretrain H_s and H_c, then train H_f and H_t with the
// inpainting networks frozen.

#include <functional>
#include <iosfwd>
#include <vector>

#include "frvi/checkpoint.hpp"
#include "frvi/config.hpp"
#include "frvi/losses.hpp"
#include "frvi/optim.hpp"
#include "frvi/pipeline.hpp"

namespace frvi {

enum class Stage { PretrainFrames, PretrainFlow, Main };

std::string to_string(Stage s);
Stage parse_stage(const std::string& text);

// Synthetic dataset description.
struct DataConfig {
  int num_videos = 8;
  int clip_length = 8;
  int frame_size = 32;
  int num_shapes = 2;
  MaskKind mask_type = MaskKind::RandomWalker;
  WalkerParams walker{6, 10, 30, 30.0, 1, 3};
  std::uint64_t seed = 0;
};

// Input frames are the masked ground truth; gt frames and flows attached.
// flow_valid (optional) receives the per-step gt-flow validity maps.
std::vector<VideoSequence> make_dataset(const DataConfig& cfg,
                                        std::vector<std::vector<Mask>>* flow_valid = nullptr);

struct TrainConfig {
  Stage stage = Stage::Main;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_videos = 1;   // clips per step
  int clip_length = 8;    // T
  int steps = 100;        // main stage
  int pretrain_steps = 100;
  std::uint64_t seed = 0;
  LossWeights weights;
  bool flow_detach = true;
  double grad_clip = 5.0;
  double divergence_factor = 10.0;
  Variant variant = Variant::Ours;

  int num_videos = 8;
  int frame_size = 32;
  int num_shapes = 2;
  MaskKind mask_type = MaskKind::RandomWalker;
  // Shorter, thinner strokes suit the 32x32 default frame size.
  WalkerParams walker{6, 10, 30, 30.0, 1, 3};

  ModelConfig model;
  FlowEstimatorConfig flow;
  LongRangeMode long_range = LongRangeMode::Direct;

  int log_every = 0;  // 0 = no log lines

  AdamConfig adam() const;
  DataConfig data() const;
  PipelineOptions pipeline() const;
  void validate() const;
};

// Unknown keys and malformed values throw InputError.
TrainConfig train_config_from(const Settings& settings, TrainConfig base = {});
Settings to_settings(const TrainConfig& cfg);

// Per-step gradient audit, taken after back-propagation and before the update.
struct GradientAudit {
  int steps = 0;
  int trained_nonzero = 0;  // steps where every trained network got a gradient
  int frozen_nonzero = 0;   // steps where a frozen network got a gradient
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossReport> log;  // one report per executed step
  double initial_loss = 0;
  GradientAudit audit;
};

// Runs cfg.stage from `start` until the stage's step budget is reached. A
// checkpoint of the same stage resumes (step, Adam moments); any other
// checkpoint starts the stage from step 0. `on_step` is called after each
// update.
TrainResult train_stage(const TrainConfig& cfg, Checkpoint start,
                        const std::vector<VideoSequence>& data, std::ostream* log = nullptr,
                        const std::function<void(const Checkpoint&)>& on_step = {});

Checkpoint pretrain_frames(const TrainConfig& cfg, Checkpoint start,
                           const std::vector<VideoSequence>& data);
Checkpoint pretrain_flow(const TrainConfig& cfg, Checkpoint start,
                         const std::vector<VideoSequence>& data);
Checkpoint train_main(const TrainConfig& cfg, Checkpoint start,
                      const std::vector<VideoSequence>& data);

// Fresh model checkpoint for cfg.model.
Checkpoint initial_checkpoint(const TrainConfig& cfg);

// Mean full objective (all six weighted terms, main-stage inputs) over the
// dataset, without gradients.
LossReport dataset_loss(const Model& model, const std::vector<VideoSequence>& data,
                        const TrainConfig& cfg);

}  // namespace frvi
