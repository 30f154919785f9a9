#include "frvi/nets.hpp"

#include <cmath>

#include "frvi/kernels.hpp"

namespace frvi {

namespace {

constexpr double kHiddenGain = 1.4142135623730951;  // ELU layers
constexpr double kLinearGain = 1.0;

Tensor concat_masks(const std::vector<std::pair<Tensor, int>>& parts) {
  int channels = 0;
  for (const auto& [m, c] : parts) channels += c;
  const Tensor& first = parts.front().first;
  Tensor out(channels, first.height(), first.width());
  int row = 0;
  for (const auto& [m, c] : parts) {
    out.matrix().middleRows(row, c) = m.matrix().replicate(c, 1);
    row += c;
  }
  return out;
}

}  // namespace

// --- PartialConvUNet ---------------------------------------------------------

PartialConvUNet::PartialConvUNet(const std::string& prefix, int in_channels,
                                 int out_channels, int base, Rng& rng) {
  const int b1 = base, b2 = 2 * base;
  enc_.push_back(add_conv(params_, prefix + ".enc1", in_channels, b1, 3, 2, rng, kHiddenGain));
  enc_.push_back(add_conv(params_, prefix + ".enc2", b1, b2, 3, 2, rng, kHiddenGain));
  enc_.push_back(add_conv(params_, prefix + ".enc3", b2, b2, 3, 2, rng, kHiddenGain));
  dec_.push_back(add_conv(params_, prefix + ".dec3", b2 + b2, b2, 3, 1, rng, kHiddenGain));
  dec_.push_back(add_conv(params_, prefix + ".dec2", b2 + b1, b1, 3, 1, rng, kHiddenGain));
  dec_.push_back(add_conv(params_, prefix + ".dec1", b1 + in_channels, out_channels, 3, 1, rng,
                          kLinearGain));
}

ad::Var PartialConvUNet::forward(const ad::Var& x, const Tensor& known) const {
  require_divisible(x.shape().height, x.shape().width, static_cast<int>(enc_.size()));
  std::vector<ad::Var> feats{x};
  std::vector<Tensor> masks{known};
  for (const ConvSpec& conv : enc_) {
    auto r = apply_partial_conv(params_, conv, feats.back(), masks.back());
    feats.push_back(ad::elu(r.output));
    masks.push_back(std::move(r.mask));
  }
  ad::Var y = feats.back();
  Tensor ym = masks.back();
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const std::size_t skip = enc_.size() - 1 - i;
    const ad::Var up = ad::upsample2x(y);
    const Tensor up_mask = kernels::upsample2x(ym);
    const ad::Var parts[] = {up, feats[skip]};
    const Tensor cat_mask = concat_masks({{up_mask, up.shape().channels},
                                          {masks[skip], feats[skip].shape().channels}});
    auto r = apply_partial_conv(params_, dec_[i], ad::concat_channels(parts), cat_mask);
    const bool last = i + 1 == dec_.size();
    y = last ? r.output : ad::elu(r.output);
    ym = std::move(r.mask);
  }
  return y;
}

// --- FrameInpainter ----------------------------------------------------------

FrameInpainter::FrameInpainter(int base, Rng& rng)
    : net_("hs", kFrameChannels, kFrameChannels, base, rng) {}

ad::Var FrameInpainter::forward(const ad::Var& input, const Mask& holes) const {
  validate_mask(holes, input.shape());
  const Mask known = known_from_holes(holes);
  const ad::Var raw = net_.forward(input, known);
  return ad::composite(known, input, ad::sigmoid(raw));
}

Frame FrameInpainter::inpaint(const Frame& input, const Mask& holes) const {
  ad::NoGradGuard guard;
  return forward(ad::constant(input), holes).value();
}

// --- FlowCompleter -----------------------------------------------------------

FlowCompleter::FlowCompleter(int base, Rng& rng) : net_("hc", 3, 2, base, rng) {}

ad::Var FlowCompleter::forward_normalized(const NormalizedFlow& fhat,
                                          const Mask& holes) const {
  if (fhat.values.channels() != 3) {
    throw ShapeError("flow completion expects a 3-channel normalised flow");
  }
  validate_mask(holes, fhat.values.shape());
  const Mask known = known_from_holes(holes);
  Tensor input = fhat.values;
  input.array().rowwise() *=
      Eigen::Map<const Eigen::Array<Real, 1, Eigen::Dynamic>>(known.data(), known.size());
  const ad::Var raw = net_.forward(ad::constant(std::move(input)), known);
  const ad::Var observed = ad::constant(
      Tensor({2, fhat.values.height(), fhat.values.width()},
             fhat.values.matrix().topRows(2)));
  return ad::composite(known, observed, ad::tanh(raw));
}

ad::Var FlowCompleter::forward(const NormalizedFlow& fhat, const Mask& holes) const {
  return denormalize(forward_normalized(fhat, holes), fhat);
}

FlowField FlowCompleter::complete(const NormalizedFlow& fhat, const Mask& holes) const {
  ad::NoGradGuard guard;
  return forward(fhat, holes).value();
}

// --- FlowBlender -------------------------------------------------------------

FlowBlender::FlowBlender(int base, Rng& rng) {
  const int b1 = base, b2 = 2 * base;
  enc_.push_back(add_conv(params_, "hf.enc1", 4, b1, 3, 2, rng, kHiddenGain));
  enc_.push_back(add_conv(params_, "hf.enc2", b1, b2, 3, 2, rng, kHiddenGain));
  enc_.push_back(add_conv(params_, "hf.enc3", b2, b2, 3, 2, rng, kHiddenGain));
  dec_.push_back(add_conv(params_, "hf.dec3", b2 + b2, b2, 3, 1, rng, kHiddenGain));
  dec_.push_back(add_conv(params_, "hf.dec2", b2 + b1, b1, 3, 1, rng, kHiddenGain));
  dec_.push_back(add_conv(params_, "hf.dec1", b1 + 4, 2, 3, 1, rng, kLinearGain));
}

FlowBlender::Output FlowBlender::forward(const ad::Var& fp, const ad::Var& fi) const {
  require_shape(fi.shape(), fp.shape(), "flow blending");
  if (fp.shape().channels != 2) throw ShapeError("flow blending expects 2-channel flows");
  require_divisible(fp.shape().height, fp.shape().width, static_cast<int>(enc_.size()));
  const ad::Var in_parts[] = {fp, fi};
  std::vector<ad::Var> feats{ad::concat_channels(in_parts)};
  for (const ConvSpec& conv : enc_) feats.push_back(ad::elu(apply_conv(params_, conv, feats.back())));
  ad::Var y = feats.back();
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const std::size_t skip = enc_.size() - 1 - i;
    const ad::Var parts[] = {ad::upsample2x(y), feats[skip]};
    y = apply_conv(params_, dec_[i], ad::concat_channels(parts));
    if (i + 1 < dec_.size()) y = ad::elu(y);
  }
  Output out;
  out.residual = y;
  out.flow = ad::scale(ad::add(ad::add(fp, fi), y), 0.5);
  return out;
}

FlowField FlowBlender::blend(const FlowField& fp, const FlowField& fi) const {
  ad::NoGradGuard guard;
  return forward(ad::constant(fp), ad::constant(fi)).flow.value();
}

// --- ConvLSTMCell ------------------------------------------------------------

ConvLSTMCell::ConvLSTMCell(NetworkParams& params, const std::string& prefix,
                           int in_channels, int hidden, Rng& rng)
    : hidden_(hidden) {
  wx_ = add_conv(params, prefix + ".wx", in_channels, 4 * hidden, 3, 1, rng, kLinearGain);
  wh_ = add_conv(params, prefix + ".wh", hidden, 4 * hidden, 3, 1, rng, kLinearGain, false);
  // Gate order in the stacked bias: input, forget, candidate, output.
  params.value(prefix + ".wx.bias").matrix().middleRows(hidden, hidden).setConstant(1.0);
  wci_ = params.add(prefix + ".wci", Tensor(hidden, 1, 1));
  wcf_ = params.add(prefix + ".wcf", Tensor(hidden, 1, 1));
  wco_ = params.add(prefix + ".wco", Tensor(hidden, 1, 1));
}

ConvLSTMState ConvLSTMCell::zero_state(int height, int width) const {
  return {ad::constant(Tensor(hidden_, height, width)),
          ad::constant(Tensor(hidden_, height, width))};
}

ConvLSTMState ConvLSTMCell::step(const NetworkParams& params, const ad::Var& x,
                                 const ConvLSTMState& state, Gates* gates) const {
  const Shape hs{hidden_, x.shape().height, x.shape().width};
  require_shape(state.hidden.shape(), hs, "ConvLSTM hidden state");
  require_shape(state.cell.shape(), hs, "ConvLSTM cell state");
  if (!x.value().all_finite() || !state.hidden.value().all_finite() ||
      !state.cell.value().all_finite()) {
    throw NumericError("ConvLSTM: non-finite input");
  }
  const ad::Var pre = ad::add(apply_conv(params, wx_, x), apply_conv(params, wh_, state.hidden));
  const int h = hidden_;
  const ad::Var& c_prev = state.cell;
  const ad::Var i = ad::sigmoid(ad::add(ad::slice_channels(pre, 0, h),
                                        ad::mul_channelwise(c_prev, params.var(wci_))));
  const ad::Var f = ad::sigmoid(ad::add(ad::slice_channels(pre, h, h),
                                        ad::mul_channelwise(c_prev, params.var(wcf_))));
  const ad::Var g = ad::tanh(ad::slice_channels(pre, 2 * h, h));
  const ad::Var c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
  const ad::Var o = ad::sigmoid(ad::add(ad::slice_channels(pre, 3 * h, h),
                                        ad::mul_channelwise(c, params.var(wco_))));
  if (gates) *gates = {i, f, o, g};
  return {ad::mul(o, ad::tanh(c)), c};
}

// --- Refiner -----------------------------------------------------------------

Refiner::Refiner(int branch_channels, int hidden, Rng& rng) {
  const int b = branch_channels;
  enc_o1_ = add_conv(params_, "ht.enc_prev1", kFrameChannels, b, 3, 1, rng, kHiddenGain);
  enc_o2_ = add_conv(params_, "ht.enc_prev2", b, b, 3, 2, rng, kHiddenGain);
  enc_p1_ = add_conv(params_, "ht.enc_cur1", kFrameChannels, b, 3, 1, rng, kHiddenGain);
  enc_p2_ = add_conv(params_, "ht.enc_cur2", b, b, 3, 2, rng, kHiddenGain);
  lstm_ = ConvLSTMCell(params_, "ht.lstm", 2 * b, hidden, rng);
  dec1_ = add_conv(params_, "ht.dec1", hidden + 2 * b, b, 3, 1, rng, kHiddenGain);
  dec2_ = add_conv(params_, "ht.dec2", b, kFrameChannels, 3, 1, rng, kLinearGain);
}

ConvLSTMState Refiner::zero_state(int height, int width) const {
  require_divisible(height, width, 1);
  return lstm_.zero_state(height / 2, width / 2);
}

void Refiner::zero_decoder_output() {
  params_.value("ht.dec2.weight").matrix().setZero();
  params_.value("ht.dec2.bias").matrix().setZero();
}

Refiner::Output Refiner::forward(const ad::Var& prev_output, const ad::Var& inpainted,
                                 const ConvLSTMState& state, const Mask* holes) const {
  require_shape(inpainted.shape(), prev_output.shape(), "refine");
  if (prev_output.shape().channels != kFrameChannels) {
    throw ShapeError("refine expects 3-channel frames");
  }
  const ad::Var so = ad::elu(apply_conv(params_, enc_o1_, prev_output));
  const ad::Var sp = ad::elu(apply_conv(params_, enc_p1_, inpainted));
  const ad::Var fo = ad::elu(apply_conv(params_, enc_o2_, so));
  const ad::Var fp = ad::elu(apply_conv(params_, enc_p2_, sp));
  const ad::Var x_parts[] = {fo, fp};
  Output out;
  out.state = lstm_.step(params_, ad::concat_channels(x_parts), state);
  const ad::Var d_parts[] = {ad::upsample2x(out.state.hidden), so, sp};
  const ad::Var d = ad::elu(apply_conv(params_, dec1_, ad::concat_channels(d_parts)));
  out.residual = apply_conv(params_, dec2_, d);
  out.unclamped = ad::add(prev_output, out.residual);
  out.output = ad::clamp(out.unclamped, 0.0, 1.0);
  if (holes) out.output = ad::composite(known_from_holes(*holes), inpainted, out.output);
  return out;
}

// --- RandomConvPyramid ---------------------------------------------------------

RandomConvPyramid::RandomConvPyramid(int levels, std::uint64_t seed) {
  if (levels < 1) throw InputError("feature pyramid needs at least one level");
  Rng rng(seed);
  int cin = kFrameChannels;
  for (int l = 0; l < levels; ++l) {
    const int cout = std::min(8 << l, 32);
    layers_.push_back(add_conv(params_, "hp.level" + std::to_string(l + 1), cin, cout, 3, 2,
                               rng, kHiddenGain));
    cin = cout;
  }
  params_.set_trainable(false);
}

std::vector<ad::Var> RandomConvPyramid::features(const ad::Var& frame) const {
  std::vector<ad::Var> out;
  ad::Var x = frame;
  for (const ConvSpec& conv : layers_) {
    x = ad::elu(apply_conv(params_, conv, x));
    out.push_back(x);
  }
  return out;
}

// --- Model ---------------------------------------------------------------------

Model::Model(const ModelConfig& cfg) : config(cfg) {
  if (cfg.depth != kUNetDepth) {
    throw InputError("only U-Net depth " + std::to_string(kUNetDepth) + " is supported");
  }
  Rng rs(derive_seed(cfg.seed, {1})), rc(derive_seed(cfg.seed, {2})),
      rf(derive_seed(cfg.seed, {3})), rt(derive_seed(cfg.seed, {4}));
  hs = FrameInpainter(cfg.inpaint_channels, rs);
  hc = FlowCompleter(cfg.inpaint_channels, rc);
  hf = FlowBlender(cfg.blend_channels, rf);
  ht = Refiner(cfg.refine_channels, cfg.lstm_hidden, rt);
}

std::int64_t Model::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : networks()) n += p->param_count();
  return n;
}

std::vector<std::pair<std::string, const NetworkParams*>> Model::networks() const {
  return {{"hs", &hs.params()}, {"hc", &hc.params()}, {"hf", &hf.params()},
          {"ht", &ht.params()}};
}

std::vector<std::pair<std::string, NetworkParams*>> Model::networks() {
  return {{"hs", &hs.params()}, {"hc", &hc.params()}, {"hf", &hf.params()},
          {"ht", &ht.params()}};
}

}  // namespace frvi
