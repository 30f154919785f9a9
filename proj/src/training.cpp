#include "frvi/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace frvi {

namespace {

const FeatureExtractor& perceptual_extractor() {
  static const RandomConvPyramid pyramid;
  return pyramid;
}

std::uint64_t stage_tag(Stage s) { return 100 + static_cast<std::uint64_t>(s); }

std::string to_string(FlowMethod m) {
  return m == FlowMethod::Classical ? "classical" : "gt_passthrough";
}

FlowMethod parse_flow_method(const std::string& text) {
  if (text == "classical") return FlowMethod::Classical;
  if (text == "gt_passthrough") return FlowMethod::GroundTruthPassthrough;
  throw InputError("unknown flow_method '" + text + "' (classical, gt_passthrough)");
}

std::string to_string(LongRangeMode m) { return m == LongRangeMode::Direct ? "direct" : "compose"; }

LongRangeMode parse_long_range(const std::string& text) {
  if (text == "direct") return LongRangeMode::Direct;
  if (text == "compose") return LongRangeMode::Compose;
  throw InputError("unknown long_range '" + text + "' (direct, compose)");
}

int as_int(const std::string& key, const std::string& value) {
  const std::int64_t v = parse_int(key, value);
  if (v < INT32_MIN || v > INT32_MAX) throw InputError("config key '" + key + "' out of range");
  return static_cast<int>(v);
}

std::vector<NetworkParams*> trained_networks(Model& model, Stage stage, Variant variant) {
  switch (stage) {
    case Stage::PretrainFrames: return {&model.hs.params()};
    case Stage::PretrainFlow: return {&model.hc.params()};
    case Stage::Main: break;
  }
  switch (variant) {
    case Variant::PartialConvOnly: return {};
    case Variant::FPOnly:
    case Variant::FIOnly: return {&model.ht.params()};
    default: return {&model.hf.params(), &model.ht.params()};
  }
}

void set_trainable_only(Model& model, const std::vector<NetworkParams*>& nets) {
  for (auto& [name, p] : model.networks()) {
    bool on = false;
    for (NetworkParams* n : nets) on = on || n == p;
    p->set_trainable(on);
  }
}

std::vector<Tensor> snapshot(const NetworkParams& p) {
  std::vector<Tensor> out;
  for (const auto& e : p.entries()) out.push_back(e.var.value());
  return out;
}

bool same_values(const NetworkParams& p, const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < snap.size(); ++i) {
    if (!(p.entries()[i].var.value() == snap[i])) return false;
  }
  return true;
}

// Per-pair inputs for flow pretraining.
struct FlowSample {
  NormalizedFlow fhat;
  Mask holes;
  Tensor target;  // gt flow in the normalised domain of fhat
};

LossInputs main_inputs(const ClipInputs& clip, const ClipOutputs& out, bool flow_detach) {
  LossInputs in;
  in.outputs = out.outputs;
  in.targets = clip.targets;
  in.masks = clip.masks;
  in.flows = out.flows;
  in.gt_flows = clip.gt_flows;
  for (const FlowField& f : clip.reverse) in.reverse_flows.push_back(ad::constant(f));
  for (const FlowField& f : clip.to_first) in.to_first.push_back(ad::constant(f));
  for (const FlowField& f : clip.to_last) in.to_last.push_back(ad::constant(f));
  in.extractor = &perceptual_extractor();
  in.flow_detach = flow_detach;
  return in;
}

void accumulate(LossReport& acc, const LossReport& r, double w) {
  acc.d += w * r.d;
  acc.p += w * r.p;
  acc.s += w * r.s;
  acc.r += w * r.r;
  acc.l += w * r.l;
  acc.f += w * r.f;
  acc.total += w * r.total;
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::PretrainFrames: return "pretrain_frames";
    case Stage::PretrainFlow: return "pretrain_flow";
    case Stage::Main: return "main";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  for (Stage s : {Stage::PretrainFrames, Stage::PretrainFlow, Stage::Main}) {
    if (to_string(s) == text) return s;
  }
  throw InputError("unknown stage '" + text + "' (pretrain_frames, pretrain_flow, main)");
}

std::vector<VideoSequence> make_dataset(const DataConfig& cfg,
                                        std::vector<std::vector<Mask>>* flow_valid) {
  if (cfg.num_videos < 1) throw InputError("dataset needs at least one video");
  if (cfg.clip_length < 2) throw InputError("dataset clips need at least two frames");
  require_divisible(cfg.frame_size, cfg.frame_size);
  std::vector<VideoSequence> out;
  if (flow_valid) flow_valid->clear();
  for (int i = 0; i < cfg.num_videos; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    const SynthScene scene = random_scene(cfg.num_shapes, cfg.clip_length, cfg.frame_size,
                                          cfg.frame_size, derive_seed(cfg.seed, {1, idx}));
    RenderedScene rendered = render_scene(scene, cfg.clip_length, cfg.frame_size, cfg.frame_size);
    if (flow_valid) flow_valid->push_back(std::move(rendered.flow_valid));
    VideoSequence v = std::move(rendered.video);
    MaskSpec spec;
    spec.kind = cfg.mask_type;
    spec.frame_size = cfg.frame_size;
    spec.seed = derive_seed(cfg.seed, {2, idx});
    spec.walker = cfg.walker;
    v.masks = generate_masks(spec, cfg.clip_length);
    for (int t = 0; t < cfg.clip_length; ++t) v.frames[t] = apply_mask(v.frames[t], v.masks[t]);
    out.push_back(std::move(v));
  }
  return out;
}

AdamConfig TrainConfig::adam() const {
  return {learning_rate, adam_beta1, adam_beta2, adam_eps};
}

DataConfig TrainConfig::data() const {
  DataConfig d;
  d.num_videos = num_videos;
  d.clip_length = clip_length;
  d.frame_size = frame_size;
  d.num_shapes = num_shapes;
  d.mask_type = mask_type;
  d.walker = walker;
  d.seed = seed;
  return d;
}

PipelineOptions TrainConfig::pipeline() const {
  return {flow, long_range, variant};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw InputError("learning_rate must be > 0");
  if (clip_length < 2) throw InputError("clip_length must be >= 2");
  if (batch_videos < 1) throw InputError("batch_videos must be >= 1");
  if (steps < 0 || pretrain_steps < 0) throw InputError("step counts must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_eps > 0)) {
    throw InputError("invalid Adam hyper-parameters");
  }
  for (double w : {weights.lambda_s, weights.lambda_d, weights.lambda_r, weights.lambda_f,
                   weights.lambda_p, weights.lambda_l, weights.full_frame}) {
    if (!(w >= 0)) throw InputError("loss weights must be non-negative");
  }
  if (!(grad_clip > 0) || !(divergence_factor > 1)) {
    throw InputError("grad_clip must be > 0 and divergence_factor > 1");
  }
  if (frame_size % (1 << model.depth) != 0) {
    throw ShapeError("frame_size must be divisible by " + std::to_string(1 << model.depth));
  }
}

TrainConfig train_config_from(const Settings& settings, TrainConfig c) {
  for (const auto& [k, v] : settings) {
    if (k == "stage") c.stage = parse_stage(v);
    else if (k == "learning_rate") c.learning_rate = parse_double(k, v);
    else if (k == "adam_beta1") c.adam_beta1 = parse_double(k, v);
    else if (k == "adam_beta2") c.adam_beta2 = parse_double(k, v);
    else if (k == "adam_eps") c.adam_eps = parse_double(k, v);
    else if (k == "batch_videos") c.batch_videos = as_int(k, v);
    else if (k == "clip_length") c.clip_length = as_int(k, v);
    else if (k == "steps") c.steps = as_int(k, v);
    else if (k == "pretrain_steps") c.pretrain_steps = as_int(k, v);
    else if (k == "seed") c.seed = parse_u64(k, v);
    else if (k == "lambda_s") c.weights.lambda_s = parse_double(k, v);
    else if (k == "lambda_d") c.weights.lambda_d = parse_double(k, v);
    else if (k == "lambda_r") c.weights.lambda_r = parse_double(k, v);
    else if (k == "lambda_f") c.weights.lambda_f = parse_double(k, v);
    else if (k == "lambda_p") c.weights.lambda_p = parse_double(k, v);
    else if (k == "lambda_l") c.weights.lambda_l = parse_double(k, v);
    else if (k == "full_frame_weight") c.weights.full_frame = parse_double(k, v);
    else if (k == "flow_detach") c.flow_detach = parse_bool(k, v);
    else if (k == "grad_clip") c.grad_clip = parse_double(k, v);
    else if (k == "divergence_factor") c.divergence_factor = parse_double(k, v);
    else if (k == "variant") c.variant = parse_variant(v);
    else if (k == "num_videos") c.num_videos = as_int(k, v);
    else if (k == "frame_size") c.frame_size = as_int(k, v);
    else if (k == "num_shapes") c.num_shapes = as_int(k, v);
    else if (k == "mask_type") c.mask_type = parse_mask_kind(v);
    else if (k == "walker_strokes") c.walker.num_strokes = as_int(k, v);
    else if (k == "walker_min_steps") c.walker.min_steps = as_int(k, v);
    else if (k == "walker_max_steps") c.walker.max_steps = as_int(k, v);
    else if (k == "walker_max_turn") c.walker.max_turn_degrees = parse_double(k, v);
    else if (k == "walker_min_width") c.walker.min_width = as_int(k, v);
    else if (k == "walker_max_width") c.walker.max_width = as_int(k, v);
    else if (k == "inpaint_channels") c.model.inpaint_channels = as_int(k, v);
    else if (k == "blend_channels") c.model.blend_channels = as_int(k, v);
    else if (k == "refine_channels") c.model.refine_channels = as_int(k, v);
    else if (k == "lstm_hidden") c.model.lstm_hidden = as_int(k, v);
    else if (k == "flow_method") c.flow.method = parse_flow_method(v);
    else if (k == "flow_levels") c.flow.pyramid_levels = as_int(k, v);
    else if (k == "flow_iterations") c.flow.iterations = as_int(k, v);
    else if (k == "flow_smoothness") c.flow.smoothness_weight = parse_double(k, v);
    else if (k == "flow_warps") c.flow.warps_per_level = as_int(k, v);
    else if (k == "long_range") c.long_range = parse_long_range(v);
    else if (k == "log_every") c.log_every = as_int(k, v);
    else throw InputError("unknown config key '" + k + "'");
  }
  c.model.seed = c.seed;
  return c;
}

Settings to_settings(const TrainConfig& c) {
  Settings s;
  s["stage"] = to_string(c.stage);
  s["learning_rate"] = format_double(c.learning_rate);
  s["adam_beta1"] = format_double(c.adam_beta1);
  s["adam_beta2"] = format_double(c.adam_beta2);
  s["adam_eps"] = format_double(c.adam_eps);
  s["batch_videos"] = std::to_string(c.batch_videos);
  s["clip_length"] = std::to_string(c.clip_length);
  s["steps"] = std::to_string(c.steps);
  s["pretrain_steps"] = std::to_string(c.pretrain_steps);
  s["seed"] = std::to_string(c.seed);
  s["lambda_s"] = format_double(c.weights.lambda_s);
  s["lambda_d"] = format_double(c.weights.lambda_d);
  s["lambda_r"] = format_double(c.weights.lambda_r);
  s["lambda_f"] = format_double(c.weights.lambda_f);
  s["lambda_p"] = format_double(c.weights.lambda_p);
  s["lambda_l"] = format_double(c.weights.lambda_l);
  s["full_frame_weight"] = format_double(c.weights.full_frame);
  s["flow_detach"] = c.flow_detach ? "true" : "false";
  s["grad_clip"] = format_double(c.grad_clip);
  s["divergence_factor"] = format_double(c.divergence_factor);
  s["variant"] = to_string(c.variant);
  s["num_videos"] = std::to_string(c.num_videos);
  s["frame_size"] = std::to_string(c.frame_size);
  s["num_shapes"] = std::to_string(c.num_shapes);
  s["mask_type"] = to_string(c.mask_type);
  s["walker_strokes"] = std::to_string(c.walker.num_strokes);
  s["walker_min_steps"] = std::to_string(c.walker.min_steps);
  s["walker_max_steps"] = std::to_string(c.walker.max_steps);
  s["walker_max_turn"] = format_double(c.walker.max_turn_degrees);
  s["walker_min_width"] = std::to_string(c.walker.min_width);
  s["walker_max_width"] = std::to_string(c.walker.max_width);
  s["inpaint_channels"] = std::to_string(c.model.inpaint_channels);
  s["blend_channels"] = std::to_string(c.model.blend_channels);
  s["refine_channels"] = std::to_string(c.model.refine_channels);
  s["lstm_hidden"] = std::to_string(c.model.lstm_hidden);
  s["flow_method"] = to_string(c.flow.method);
  s["flow_levels"] = std::to_string(c.flow.pyramid_levels);
  s["flow_iterations"] = std::to_string(c.flow.iterations);
  s["flow_smoothness"] = format_double(c.flow.smoothness_weight);
  s["flow_warps"] = std::to_string(c.flow.warps_per_level);
  s["long_range"] = to_string(c.long_range);
  s["log_every"] = std::to_string(c.log_every);
  return s;
}

Checkpoint initial_checkpoint(const TrainConfig& cfg) {
  Checkpoint c;
  c.model = Model(cfg.model);
  c.settings = to_settings(cfg);
  return c;
}

TrainResult train_stage(const TrainConfig& cfg, Checkpoint start,
                        const std::vector<VideoSequence>& data, std::ostream* log,
                        const std::function<void(const Checkpoint&)>& on_step) {
  cfg.validate();
  if (data.empty()) throw InputError("training needs at least one video");
  TrainResult res;
  Checkpoint& ck = res.checkpoint;
  ck = std::move(start);
  if (ck.model.config != cfg.model) {
    throw ShapeError("checkpoint architecture does not match the training config");
  }
  const std::string stage_name = to_string(cfg.stage);
  if (ck.stage != stage_name) {
    ck.stage = stage_name;
    ck.step = 0;
    ck.adam.reset();
    ck.initial_loss.reset();
  }
  if (!ck.adam) ck.adam = AdamState{};
  ck.settings = to_settings(cfg);
  Model& model = ck.model;
  const int budget = cfg.stage == Stage::Main ? cfg.steps : cfg.pretrain_steps;
  const std::vector<NetworkParams*> nets = trained_networks(model, cfg.stage, cfg.variant);
  set_trainable_only(model, nets);
  for (auto& [name, p] : model.networks()) p->zero_grad();

  // Stage-specific precomputation with the frozen networks.
  std::vector<std::vector<FlowSample>> flow_samples;
  std::vector<ClipInputs> clips;
  const PipelineOptions opts = cfg.pipeline();
  if (cfg.stage == Stage::PretrainFlow) {
    const ClassicalFlowEstimator est(cfg.flow);
    for (const VideoSequence& v : data) {
      if (!v.gt_flows) throw InputError("flow pretraining needs gt flows");
      std::vector<FlowSample> samples;
      for (int t = 1; t < v.length(); ++t) {
        FlowSample s;
        const FlowField fhat = cfg.flow.method == FlowMethod::GroundTruthPassthrough
                                   ? (*v.gt_flows)[t - 1]
                                   : est.estimate(apply_mask(v.frames[t - 1], v.masks[t - 1]),
                                                  apply_mask(v.frames[t], v.masks[t]));
        s.fhat = normalize_flow(fhat);
        s.holes = union_holes(v.masks[t - 1], v.masks[t]);
        s.target = normalize_with_range((*v.gt_flows)[t - 1], s.fhat);
        samples.push_back(std::move(s));
      }
      flow_samples.push_back(std::move(samples));
    }
  } else if (cfg.stage == Stage::Main && !nets.empty()) {
    for (const VideoSequence& v : data) {
      if (!v.gt_frames) throw InputError("main training needs ground-truth frames");
      clips.push_back(prepare_clip(model, v, opts, true));
    }
  }

  std::vector<std::vector<Tensor>> frozen;
  if (cfg.stage == Stage::Main) {
    frozen = {snapshot(model.hs.params()), snapshot(model.hc.params())};
  }

  const LossWeights frame_weights{0, cfg.weights.lambda_d, 0, 0, cfg.weights.lambda_p, 0,
                                  cfg.weights.full_frame};
  const int n = static_cast<int>(data.size());

  while (ck.step < budget && !nets.empty()) {
    Rng rng(derive_seed(cfg.seed, {stage_tag(cfg.stage), static_cast<std::uint64_t>(ck.step)}));
    std::vector<int> batch;
    for (int b = 0; b < cfg.batch_videos; ++b) batch.push_back(uniform_int(rng, 0, n - 1));

    std::vector<ad::Var> totals;
    LossReport report;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (int vi : batch) {
      const VideoSequence& v = data[vi];
      LossResult lr;
      if (cfg.stage == Stage::PretrainFrames) {
        if (!v.gt_frames) throw InputError("frame pretraining needs ground-truth frames");
        LossInputs in;
        for (int t = 0; t < v.length(); ++t) {
          in.outputs.push_back(
              model.hs.forward(ad::constant(apply_mask(v.frames[t], v.masks[t])), v.masks[t]));
        }
        in.targets = *v.gt_frames;
        in.masks = v.masks;
        in.extractor = &perceptual_extractor();
        lr = total_loss(in, frame_weights);
      } else if (cfg.stage == Stage::PretrainFlow) {
        std::vector<ad::Var> pred;
        std::vector<FlowField> target;
        for (const FlowSample& s : flow_samples[vi]) {
          pred.push_back(model.hc.forward_normalized(s.fhat, s.holes));
          target.push_back(s.target);
        }
        const ad::Var lf = loss_flow(pred, target);
        lr.report.f = lf.value().item();
        lr.total = ad::scale(lf, cfg.weights.lambda_f > 0 ? cfg.weights.lambda_f : 1.0);
        lr.report.total = lr.total.value().item();
      } else {
        const ClipOutputs out = run_clip(model, clips[vi], cfg.variant);
        lr = total_loss(main_inputs(clips[vi], out, cfg.flow_detach), cfg.weights);
      }
      totals.push_back(ad::scale(lr.total, inv));
      accumulate(report, lr.report, inv);
    }
    const ad::Var total = ad::sum(totals);
    report.step = ck.step;
    if (!std::isfinite(report.total)) {
      throw NumericError(stage_name + ": non-finite loss at step " + std::to_string(ck.step));
    }
    if (!ck.initial_loss) ck.initial_loss = report.total;
    if (report.total > cfg.divergence_factor * *ck.initial_loss && *ck.initial_loss > 0) {
      throw NumericError(stage_name + ": training diverged at step " + std::to_string(ck.step) +
                         " (loss " + format_double(report.total) + ", initial " +
                         format_double(*ck.initial_loss) + ")");
    }
    ad::backward(total);
    ++res.audit.steps;
    bool all_trained = true, any_frozen = false;
    for (auto& [name, p] : model.networks()) {
      const bool trained = std::find(nets.begin(), nets.end(), p) != nets.end();
      if (trained) all_trained = all_trained && !p->grads_all_zero();
      else any_frozen = any_frozen || !p->grads_all_zero();
    }
    res.audit.trained_nonzero += all_trained;
    res.audit.frozen_nonzero += any_frozen;
    if (cfg.stage == Stage::Main && any_frozen) {
      throw Error("frozen networks received gradients during main training");
    }
    clip_grad_norm(nets, cfg.grad_clip);
    adam_step(nets, *ck.adam, cfg.adam());
    ++ck.step;
    res.log.push_back(report);
    if (log && cfg.log_every > 0 && (report.step % cfg.log_every == 0 || ck.step == budget)) {
      *log << report.to_line() << '\n';
    }
    if (on_step) on_step(ck);
  }

  if (cfg.stage == Stage::Main && (!same_values(model.hs.params(), frozen[0]) ||
                                   !same_values(model.hc.params(), frozen[1]))) {
    throw Error("frozen networks changed during main training");
  }
  for (auto& [name, p] : model.networks()) p->set_trainable(true);
  res.initial_loss = ck.initial_loss.value_or(0.0);
  return res;
}

Checkpoint pretrain_frames(const TrainConfig& cfg, Checkpoint start,
                           const std::vector<VideoSequence>& data) {
  TrainConfig c = cfg;
  c.stage = Stage::PretrainFrames;
  return train_stage(c, std::move(start), data).checkpoint;
}

Checkpoint pretrain_flow(const TrainConfig& cfg, Checkpoint start,
                         const std::vector<VideoSequence>& data) {
  TrainConfig c = cfg;
  c.stage = Stage::PretrainFlow;
  return train_stage(c, std::move(start), data).checkpoint;
}

Checkpoint train_main(const TrainConfig& cfg, Checkpoint start,
                      const std::vector<VideoSequence>& data) {
  TrainConfig c = cfg;
  c.stage = Stage::Main;
  return train_stage(c, std::move(start), data).checkpoint;
}

LossReport dataset_loss(const Model& model, const std::vector<VideoSequence>& data,
                        const TrainConfig& cfg) {
  ad::NoGradGuard guard;
  LossReport acc;
  const double w = 1.0 / static_cast<double>(data.size());
  for (const VideoSequence& v : data) {
    const ClipInputs clip = prepare_clip(model, v, cfg.pipeline(), true);
    const ClipOutputs out = run_clip(model, clip, cfg.variant);
    accumulate(acc, total_loss(main_inputs(clip, out, cfg.flow_detach), cfg.weights).report, w);
  }
  return acc;
}

}  // namespace frvi
