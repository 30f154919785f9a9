#include "frvi/pipeline.hpp"

namespace frvi {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Ours: return "Ours";
    case Variant::PartialConvOnly: return "PartialConvOnly";
    case Variant::ConvLSTMOnly: return "ConvLSTMOnly";
    case Variant::FPOnly: return "FPOnly";
    case Variant::FIOnly: return "FIOnly";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == text) return v;
  }
  throw InputError("unknown variant '" + text +
                   "' (expected Ours, PartialConvOnly, ConvLSTMOnly, FPOnly or FIOnly)");
}

bool uses_refiner(Variant v) { return v != Variant::PartialConvOnly; }

StepFlows compute_step_flows(const Model& model, const Frame& prev_inpainted,
                             const Frame& inpainted, const Frame& prev_input,
                             const Frame& input, const Mask& prev_mask, const Mask& mask,
                             const FlowEstimatorConfig& cfg, const FlowField* gt) {
  StepFlows s;
  if (cfg.method == FlowMethod::GroundTruthPassthrough) {
    if (!gt) throw InputError("ground-truth passthrough flow needs gt flows");
    s.fp = *gt;
    s.fhat_i = *gt;
  } else {
    const ClassicalFlowEstimator est(cfg);
    s.fp = est.estimate(prev_inpainted, inpainted);
    s.fhat_i = est.estimate(prev_input, input);
  }
  s.holes = union_holes(prev_mask, mask);
  s.normalized = normalize_flow(s.fhat_i);
  s.fi = model.hc.complete(s.normalized, s.holes);
  if (!s.fi.all_finite()) throw NumericError("flow completion produced non-finite values");
  return s;
}

ad::Var select_flow(const Model& model, Variant variant, const FlowField& fp,
                    const FlowField& fi) {
  switch (variant) {
    case Variant::FPOnly:
    case Variant::PartialConvOnly: return ad::constant(fp);
    case Variant::FIOnly: return ad::constant(fi);
    default: return model.hf.forward(ad::constant(fp), ad::constant(fi)).flow;
  }
}

ClipInputs prepare_clip(const Model& model, const VideoSequence& seq,
                        const PipelineOptions& opts, bool with_training_flows) {
  seq.validate();
  const int T = seq.length();
  if (T < 1) throw InputError("empty clip");
  ClipInputs c;
  c.masks = seq.masks;
  if (seq.gt_frames) c.targets = *seq.gt_frames;
  if (seq.gt_flows) c.gt_flows = *seq.gt_flows;
  std::vector<Frame> p;
  for (int t = 0; t < T; ++t) {
    c.inputs.push_back(apply_mask(seq.frames[t], seq.masks[t]));
    const bool run_hs = opts.variant != Variant::ConvLSTMOnly || t == 0 || t == T - 1;
    p.push_back(run_hs ? model.hs.inpaint(c.inputs[t], seq.masks[t]) : c.inputs[t]);
  }
  c.inpainted = p;
  for (int t = 1; t < T; ++t) {
    const FlowField* gt = seq.gt_flows ? &(*seq.gt_flows)[t - 1] : nullptr;
    StepFlows s = compute_step_flows(model, p[t - 1], p[t], c.inputs[t - 1], c.inputs[t],
                                     seq.masks[t - 1], seq.masks[t], opts.flow, gt);
    c.fp.push_back(std::move(s.fp));
    c.fi.push_back(std::move(s.fi));
  }
  if (with_training_flows) {
    FlowEstimatorConfig cfg = opts.flow;
    cfg.method = FlowMethod::Classical;
    const ClassicalFlowEstimator est(cfg);
    for (int t = 1; t < T; ++t) c.reverse.push_back(est.estimate(p[t], p[t - 1]));
    for (int t = 0; t < T; ++t) {
      c.to_first.push_back(long_range_flow(std::span<const Frame>(p), t, 0, cfg, opts.long_range));
      c.to_last.push_back(
          long_range_flow(std::span<const Frame>(p), t, T - 1, cfg, opts.long_range));
    }
  }
  return c;
}

ClipOutputs run_clip(const Model& model, const ClipInputs& clip, Variant variant) {
  const int T = static_cast<int>(clip.inpainted.size());
  ClipOutputs out;
  for (int t = 0; t + 1 < T; ++t) {
    out.flows.push_back(select_flow(model, variant, clip.fp[t], clip.fi[t]));
  }
  if (T == 0) return out;
  if (!uses_refiner(variant)) {
    for (const Frame& p : clip.inpainted) out.outputs.push_back(ad::constant(p));
    return out;
  }
  const Shape s = clip.inpainted[0].shape();
  out.outputs.push_back(ad::constant(clip.inpainted[0]));
  ConvLSTMState state = model.ht.zero_state(s.height, s.width);
  for (int t = 1; t < T; ++t) {
    Refiner::Output r = model.ht.forward(out.outputs.back(), ad::constant(clip.inpainted[t]),
                                         state, &clip.masks[t]);
    out.outputs.push_back(r.output);
    state = std::move(r.state);
  }
  return out;
}

std::vector<Frame> complete_video(const Model& model, const VideoSequence& seq,
                                  const PipelineOptions& opts) {
  ad::NoGradGuard guard;
  const ClipInputs clip = prepare_clip(model, seq, opts, false);
  const ClipOutputs res = run_clip(model, clip, opts.variant);
  std::vector<Frame> frames;
  for (const ad::Var& o : res.outputs) frames.push_back(o.value());
  return frames;
}

}  // namespace frvi
