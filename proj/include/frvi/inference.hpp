#pragma once

// Streaming inference: frames are pushed one at a time; the session keeps
// only the previous input, mask, inpainted and output frames plus the
// ConvLSTM state.

#include <optional>
#include <string>
#include <vector>

#include "frvi/nets.hpp"
#include "frvi/pipeline.hpp"

namespace frvi {

struct RetainedStats {
  int arrays = 0;
  std::int64_t elements = 0;
};

struct StageTimes {
  double inpaint_ms = 0, flow_ms = 0, refine_ms = 0;
};

class StreamSession {
 public:
  // Variant must be streamable (not ConvLSTMOnly). compute_flows = false
  // skips the flow stage, whose result does not affect O_t.
  StreamSession(Model model, int height, int width, PipelineOptions opts = {},
                bool compute_flows = true);

  Frame push_frame(const Frame& input, const Mask& holes);

  std::int64_t frames_processed() const { return frame_count_; }
  RetainedStats retained() const;
  // F_{t-1,t} of the most recent step (empty before frame 2).
  const FlowField& last_flow() const { return last_flow_; }
  const StageTimes& last_times() const { return times_; }
  const Model& model() const { return model_; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  Model model_;
  int height_, width_;
  PipelineOptions opts_;
  bool compute_flows_;
  std::int64_t frame_count_ = 0;
  Frame prev_input_, prev_inpainted_, prev_output_;
  Mask prev_mask_;
  ConvLSTMState state_;
  FlowField last_flow_;
  StageTimes times_;
};

// Loads a checkpoint directory and checks the frame size.
StreamSession open_session(const std::string& checkpoint_dir, int height, int width,
                           PipelineOptions opts = {});

struct TimingReport {
  int frames = 0;
  double mean_ms = 0;
  double median_ms = 0;
  std::vector<double> per_frame_ms;
};

// Pushes n synthetic frames (moving scene, random-walker masks) and times
// each push. warmup frames are processed first and not reported.
TimingReport benchmark(StreamSession& session, int n_frames, std::uint64_t seed,
                       int warmup = 2);

// Mean of per_frame_ms[begin, end).
double mean_ms(const TimingReport& report, int begin, int end);

}  // namespace frvi
