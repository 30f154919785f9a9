#include "frvi/inference.hpp"

#include <algorithm>
#include <chrono>

#include "frvi/checkpoint.hpp"

namespace frvi {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void require_finite(const Tensor& t, const char* stage) {
  if (!t.all_finite()) throw NumericError(std::string(stage) + " produced non-finite values");
}

}  // namespace

StreamSession::StreamSession(Model model, int height, int width, PipelineOptions opts,
                             bool compute_flows)
    : model_(std::move(model)), height_(height), width_(width), opts_(opts),
      compute_flows_(compute_flows) {
  require_divisible(height, width, model_.config.depth);
  if (opts_.variant == Variant::ConvLSTMOnly) {
    throw InputError("ConvLSTMOnly needs the last frame in advance and cannot stream");
  }
  if (opts_.flow.method == FlowMethod::GroundTruthPassthrough && compute_flows_) {
    throw InputError("streaming inference needs an estimator, not gt passthrough");
  }
}

Frame StreamSession::push_frame(const Frame& input, const Mask& holes) {
  validate_frame(input, model_.config.depth);
  if (input.height() != height_ || input.width() != width_) {
    throw ShapeError("frame " + to_string(input.shape()) + " does not match session size " +
                     std::to_string(height_) + "x" + std::to_string(width_));
  }
  validate_mask(holes, input.shape());
  ad::NoGradGuard guard;
  times_ = {};

  auto t0 = Clock::now();
  const Frame in = apply_mask(input, holes);
  Frame p = model_.hs.inpaint(in, holes);
  require_finite(p, "frame inpainting");
  times_.inpaint_ms = ms_since(t0);

  Frame out;
  if (frame_count_ == 0) {
    out = p;
    state_ = model_.ht.zero_state(height_, width_);
  } else {
    if (compute_flows_) {
      t0 = Clock::now();
      const StepFlows s = compute_step_flows(model_, prev_inpainted_, p, prev_input_, in,
                                             prev_mask_, holes, opts_.flow);
      last_flow_ = select_flow(model_, opts_.variant, s.fp, s.fi).value();
      require_finite(last_flow_, "flow blending");
      times_.flow_ms = ms_since(t0);
    }
    t0 = Clock::now();
    if (uses_refiner(opts_.variant)) {
      Refiner::Output r = model_.ht.forward(ad::constant(std::move(prev_output_)),
                                            ad::constant(p), state_, &holes);
      out = r.output.value();
      require_finite(out, "refinement");
      state_ = std::move(r.state);
    } else {
      out = p;
    }
    times_.refine_ms = ms_since(t0);
  }
  prev_input_ = in;
  prev_inpainted_ = std::move(p);
  prev_mask_ = holes;
  prev_output_ = out;
  ++frame_count_;
  return out;
}

RetainedStats StreamSession::retained() const {
  RetainedStats s;
  for (const Tensor* t : {&prev_input_, &prev_inpainted_, &prev_output_, &prev_mask_,
                          &last_flow_}) {
    if (t->size() > 0) {
      ++s.arrays;
      s.elements += t->size();
    }
  }
  for (const ad::Var* v : {&state_.hidden, &state_.cell}) {
    if (v->defined()) {
      ++s.arrays;
      s.elements += v->value().size();
      // A retained graph would grow with the stream.
      if (!v->node()->inputs.empty()) s.arrays += static_cast<int>(v->node()->inputs.size());
    }
  }
  return s;
}

StreamSession open_session(const std::string& checkpoint_dir, int height, int width,
                           PipelineOptions opts) {
  Checkpoint ck = load_checkpoint(checkpoint_dir);
  return StreamSession(std::move(ck.model), height, width, opts);
}

TimingReport benchmark(StreamSession& session, int n_frames, std::uint64_t seed, int warmup) {
  TimingReport rep;
  if (n_frames <= 0) return rep;
  constexpr int kLoop = 16;
  const int h = session.height(), w = session.width();
  // A short rendered clip is cycled; per-frame cost does not depend on content.
  const SynthScene scene = random_scene(2, kLoop, h, w, derive_seed(seed, {1}));
  const VideoSequence clip = render_scene(scene, kLoop, h, w).video;
  std::vector<Mask> masks;
  if (h == w) {
    MaskSpec spec;
    spec.kind = MaskKind::RandomWalker;
    spec.frame_size = h;
    spec.seed = derive_seed(seed, {2});
    masks = generate_masks(spec, kLoop);
  } else {
    masks.assign(kLoop, Mask(1, h, w));
    for (Mask& m : masks) m.matrix().leftCols(w * h / 8).setOnes();
  }
  int k = 0;
  for (int i = 0; i < warmup; ++i, ++k) session.push_frame(clip.frames[k % kLoop], masks[k % kLoop]);
  rep.per_frame_ms.reserve(n_frames);
  for (int i = 0; i < n_frames; ++i, ++k) {
    const auto t0 = Clock::now();
    session.push_frame(clip.frames[k % kLoop], masks[k % kLoop]);
    rep.per_frame_ms.push_back(ms_since(t0));
  }
  rep.frames = n_frames;
  rep.mean_ms = mean_ms(rep, 0, n_frames);
  std::vector<double> sorted = rep.per_frame_ms;
  std::sort(sorted.begin(), sorted.end());
  rep.median_ms = n_frames % 2 ? sorted[n_frames / 2]
                               : 0.5 * (sorted[n_frames / 2 - 1] + sorted[n_frames / 2]);
  return rep;
}

double mean_ms(const TimingReport& report, int begin, int end) {
  begin = std::max(begin, 0);
  end = std::min(end, static_cast<int>(report.per_frame_ms.size()));
  if (end <= begin) return 0;
  double s = 0;
  for (int i = begin; i < end; ++i) s += report.per_frame_ms[i];
  return s / (end - begin);
}

}  // namespace frvi
