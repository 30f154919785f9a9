#include "frvi/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace frvi {

double eval_l1(std::span<const Frame> outputs, std::span<const Frame> gt,
               std::span<const Mask> masks) {
  if (gt.size() != outputs.size() || masks.size() != outputs.size()) {
    throw ShapeError("eval_l1: sequence lengths differ");
  }
  double sum = 0, count = 0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    require_shape(gt[t].shape(), outputs[t].shape(), "eval_l1");
    validate_mask(masks[t], outputs[t].shape());
    const auto m = Eigen::Map<const Eigen::Array<Real, 1, Eigen::Dynamic>>(masks[t].data(),
                                                                            masks[t].size());
    sum += ((outputs[t].array() - gt[t].array()).abs().rowwise() * m).sum();
    count += m.sum() * outputs[t].channels();
  }
  return count > 0 ? 255.0 * sum / count : 0.0;
}

double eval_warp_error(std::span<const Frame> outputs, std::span<const FlowField> gt_flows,
                       std::span<const Mask> weights) {
  if (outputs.size() < 2) return 0;
  if (gt_flows.size() != outputs.size() - 1) {
    throw ShapeError("eval_warp_error: need one gt flow per consecutive frame pair");
  }
  if (!weights.empty() && weights.size() != outputs.size()) {
    throw ShapeError("eval_warp_error: need one weight map per frame");
  }
  double acc = 0;
  int steps = 0;
  for (std::size_t t = 1; t < outputs.size(); ++t) {
    const Frame warped = warp(outputs[t - 1], gt_flows[t - 1]);
    Eigen::Array<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> diff =
        (outputs[t].array() - warped.array()).abs();
    double n = static_cast<double>(diff.size());
    if (!weights.empty()) {
      const auto w = Eigen::Map<const Eigen::Array<Real, 1, Eigen::Dynamic>>(
          weights[t].data(), weights[t].size());
      diff.rowwise() *= w;
      n = w.sum() * outputs[t].channels();
    }
    if (n == 0) continue;
    acc += diff.sum() / n;
    ++steps;
  }
  return steps ? acc / steps : 0.0;
}

std::uint64_t data_hash(const std::vector<VideoSequence>& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.size()) * sizeof(Real); ++i) {
      h = (h ^ bytes[i]) * 0x100000001b3ull;
    }
  };
  for (const VideoSequence& v : data) {
    for (const Frame& f : v.frames) mix(f);
    for (const Mask& m : v.masks) mix(m);
    if (v.gt_frames) for (const Frame& f : *v.gt_frames) mix(f);
    if (v.gt_flows) for (const FlowField& f : *v.gt_flows) mix(f);
  }
  return h;
}

std::vector<Mask> warp_error_weights(const VideoSequence& seq,
                                     const std::vector<Mask>& flow_valid) {
  if (static_cast<int>(flow_valid.size()) != seq.length() - 1) {
    throw ShapeError("warp_error_weights: need one validity map per step");
  }
  std::vector<Mask> w{Mask(seq.masks[0].shape())};
  for (int t = 1; t < seq.length(); ++t) {
    Mask m = seq.masks[t];
    m.array() *= flow_valid[t - 1].array();
    w.push_back(std::move(m));
  }
  return w;
}

std::int64_t variant_params(const Model& model, Variant variant) {
  const std::int64_t hs = model.hs.params().param_count(), hc = model.hc.params().param_count(),
                     hf = model.hf.params().param_count(), ht = model.ht.params().param_count();
  switch (variant) {
    case Variant::PartialConvOnly: return hs;
    case Variant::FPOnly: return hs + ht;
    case Variant::FIOnly: return hs + hc + ht;
    default: return hs + hc + hf + ht;
  }
}

EvalReport evaluate(const Model& model, Variant variant, const std::vector<VideoSequence>& data,
                    const std::vector<std::vector<Mask>>& flow_valid,
                    const PipelineOptions& opts) {
  if (flow_valid.size() != data.size()) throw ShapeError("evaluate: validity maps missing");
  EvalReport rep;
  rep.variant = variant;
  rep.params = variant_params(model, variant);
  rep.data_hash = data_hash(data);
  PipelineOptions o = opts;
  o.variant = variant;
  std::vector<Frame> all_out, all_gt;
  std::vector<Mask> all_masks;
  double warp_sum = 0, ms = 0;
  int frames = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const VideoSequence& v = data[i];
    if (!v.gt_frames || !v.gt_flows) throw InputError("evaluation needs gt frames and flows");
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Frame> out = complete_video(model, v, o);
    ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    frames += v.length();
    for (const Frame& f : out) {
      if (!f.all_finite()) throw NumericError(to_string(variant) + " produced non-finite output");
    }
    warp_sum += eval_warp_error(out, *v.gt_flows, warp_error_weights(v, flow_valid[i]));
    all_out.insert(all_out.end(), out.begin(), out.end());
    all_gt.insert(all_gt.end(), v.gt_frames->begin(), v.gt_frames->end());
    all_masks.insert(all_masks.end(), v.masks.begin(), v.masks.end());
  }
  rep.l1 = eval_l1(all_out, all_gt, all_masks);
  rep.warp_error = data.empty() ? 0 : warp_sum / static_cast<double>(data.size());
  rep.ms_per_frame = frames ? ms / frames : 0;
  return rep;
}

AblationResult run_ablation(const AblationConfig& cfg, std::optional<Checkpoint> pretrained,
                            const std::vector<std::pair<Variant, Checkpoint>>& trained,
                            std::ostream* log) {
  AblationResult res;
  const std::vector<VideoSequence> train_data = make_dataset(cfg.train.data());
  std::vector<std::vector<Mask>> valid;
  const std::vector<VideoSequence> eval_data = make_dataset(cfg.eval, &valid);
  if (pretrained) {
    res.pretrained = std::move(*pretrained);
  } else {
    res.pretrained = initial_checkpoint(cfg.train);
    res.pretrained = pretrain_frames(cfg.train, std::move(res.pretrained), train_data);
    res.pretrained = pretrain_flow(cfg.train, std::move(res.pretrained), train_data);
  }
  for (Variant v : cfg.variants) {
    EvalReport row;
    row.variant = v;
    row.mask_type = to_string(cfg.eval.mask_type);
    try {
      const Checkpoint* ready = nullptr;
      for (const auto& [tv, ck] : trained) {
        if (tv == v) ready = &ck;
      }
      Checkpoint local;
      if (!ready) {
        if (uses_refiner(v)) {
          TrainConfig tc = cfg.train;
          tc.variant = v;
          tc.stage = Stage::Main;
          local = train_stage(tc, res.pretrained, train_data).checkpoint;
        } else {
          local = res.pretrained;
        }
        ready = &local;
      }
      PipelineOptions opts = cfg.train.pipeline();
      row = evaluate(ready->model, v, eval_data, valid, opts);
      row.mask_type = to_string(cfg.eval.mask_type);
    } catch (const std::exception& e) {
      row.error = e.what();
      row.l1 = row.warp_error = std::numeric_limits<double>::quiet_NaN();
    }
    if (log) {
      *log << to_string(v) << ": l1=" << row.l1 << " warp_error=" << row.warp_error
           << (row.error.empty() ? "" : " error=" + row.error) << '\n';
    }
    res.rows.push_back(std::move(row));
  }
  return res;
}

void write_csv(std::ostream& os, const std::vector<EvalReport>& rows) {
  os << "variant,mask_type,l1,warp_error,params,ms_per_frame\n";
  char buf[256];
  for (const EvalReport& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%lld,%.4f\n", to_string(r.variant).c_str(),
                  r.mask_type.c_str(), r.l1, r.warp_error, static_cast<long long>(r.params),
                  r.ms_per_frame);
    os << buf;
  }
}

void write_table(std::ostream& os, const std::vector<EvalReport>& rows) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-14s %10s %12s %10s %10s\n", "variant", "mask",
                "l1(x255)", "warp_error", "params", "ms/frame");
  os << buf;
  for (const EvalReport& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %-14s %10.4f %12.6f %10lld %10.3f",
                  to_string(r.variant).c_str(), r.mask_type.c_str(), r.l1, r.warp_error,
                  static_cast<long long>(r.params), r.ms_per_frame);
    os << buf;
    if (!r.error.empty()) os << "  FAILED: " << r.error;
    os << '\n';
  }
  if (!rows.empty()) {
    std::snprintf(buf, sizeof buf, "eval data hash %016llx\n",
                  static_cast<unsigned long long>(rows.front().data_hash));
    os << buf;
  }
}

}  // namespace frvi
