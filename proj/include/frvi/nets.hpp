#pragma once

// Learnable components: partial-convolution U-Nets for frame inpainting
// (H_s) and flow completion (H_c), the flow blending U-Net (H_f), the
// ConvLSTM refiner (H_t) and the fixed perceptual feature pyramid (H_p).

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "frvi/autograd.hpp"
#include "frvi/flow.hpp"
#include "frvi/random.hpp"
#include "frvi/video.hpp"

namespace frvi {

// Named parameter store. Each entry is a leaf Var whose node carries a
// same-shape gradient buffer. Copies are deep.
class NetworkParams {
 public:
  struct Entry {
    std::string name;
    ad::Var var;
  };

  NetworkParams() = default;
  NetworkParams(const NetworkParams& other);
  NetworkParams& operator=(const NetworkParams& other);
  NetworkParams(NetworkParams&&) noexcept = default;
  NetworkParams& operator=(NetworkParams&&) noexcept = default;

  int add(const std::string& name, Tensor init);
  const ad::Var& var(int index) const { return entries_[index].var; }
  const ad::Var& get(const std::string& name) const;
  Tensor& value(const std::string& name);
  bool contains(const std::string& name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::int64_t param_count() const;

  void set_trainable(bool trainable);
  bool trainable() const { return trainable_; }
  void zero_grad();
  bool grads_all_zero() const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
  bool trainable_ = true;
};

std::int64_t count_params(const NetworkParams& params);

struct ConvSpec {
  int weight = -1;
  int bias = -1;
  int stride = 1;
};

// Adds "<name>.weight" (cout, cin, k*k) and "<name>.bias" with a
// fan-in-scaled uniform initialisation of bound gain * sqrt(3 / fan_in).
ConvSpec add_conv(NetworkParams& params, const std::string& name, int cin,
                  int cout, int k, int stride, Rng& rng, double gain,
                  bool bias = true);
ad::Var apply_conv(const NetworkParams& params, const ConvSpec& conv,
                   const ad::Var& x);
ad::PartialConvResult apply_partial_conv(const NetworkParams& params,
                                         const ConvSpec& conv,
                                         const ad::Var& x, const Tensor& known);

struct ModelConfig {
  int inpaint_channels = 16;  // base width of the H_s / H_c U-Nets
  int blend_channels = 16;    // base width of H_f
  int refine_channels = 16;   // per-branch encoder width of H_t
  int lstm_hidden = 16;
  int depth = kUNetDepth;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

// Three-level U-Net of partial convolutions with mask propagation. Encoder
// layers stride 2; decoder layers upsample (features and masks), concatenate
// the matching encoder output and apply a stride-1 partial convolution.
class PartialConvUNet {
 public:
  PartialConvUNet() = default;
  PartialConvUNet(const std::string& prefix, int in_channels, int out_channels,
                  int base, Rng& rng);

  // known: (1,H,W), 1 = valid input. Returns the linear output layer.
  ad::Var forward(const ad::Var& x, const Tensor& known) const;

  NetworkParams& params() { return params_; }
  const NetworkParams& params() const { return params_; }

 private:
  NetworkParams params_;
  std::vector<ConvSpec> enc_, dec_;
};

// H_s: P_t = known * I_t + hole * sigmoid(U-Net(I_t)).
class FrameInpainter {
 public:
  FrameInpainter() = default;
  FrameInpainter(int base, Rng& rng);

  ad::Var forward(const ad::Var& input, const Mask& holes) const;
  Frame inpaint(const Frame& input, const Mask& holes) const;

  NetworkParams& params() { return net_.params(); }
  const NetworkParams& params() const { return net_.params(); }

 private:
  PartialConvUNet net_;
};

// H_c: completes a normalised 3-channel flow; output is composited with the
// known estimate and mapped back to pixels with the instance range.
class FlowCompleter {
 public:
  FlowCompleter() = default;
  FlowCompleter(int base, Rng& rng);

  // Completed flow in the normalised domain, (2, H, W).
  ad::Var forward_normalized(const NormalizedFlow& fhat,
                             const Mask& holes) const;
  ad::Var forward(const NormalizedFlow& fhat, const Mask& holes) const;
  FlowField complete(const NormalizedFlow& fhat, const Mask& holes) const;

  NetworkParams& params() { return net_.params(); }
  const NetworkParams& params() const { return net_.params(); }

 private:
  PartialConvUNet net_;
};

// H_f: F = 0.5 * (F^P + F^I + U-Net([F^P, F^I])). Six convolutions: three
// stride-2 encoder layers, three decoder layers with skip concatenation.
class FlowBlender {
 public:
  struct Output {
    ad::Var flow;
    ad::Var residual;
  };

  FlowBlender() = default;
  FlowBlender(int base, Rng& rng);

  Output forward(const ad::Var& fp, const ad::Var& fi) const;
  FlowField blend(const FlowField& fp, const FlowField& fi) const;

  NetworkParams& params() { return params_; }
  const NetworkParams& params() const { return params_; }

 private:
  NetworkParams params_;
  std::vector<ConvSpec> enc_, dec_;
};

struct ConvLSTMState {
  ad::Var hidden;  // (C_h, H/s, W/s)
  ad::Var cell;
};

// ConvLSTM with Hadamard peepholes. Peephole weights are per channel and
// broadcast over space so the cell accepts any frame size.
class ConvLSTMCell {
 public:
  struct Gates {
    ad::Var input, forget, output, candidate;
  };

  ConvLSTMCell() = default;
  ConvLSTMCell(NetworkParams& params, const std::string& prefix,
               int in_channels, int hidden, Rng& rng);

  ConvLSTMState step(const NetworkParams& params, const ad::Var& x,
                     const ConvLSTMState& state, Gates* gates = nullptr) const;
  ConvLSTMState zero_state(int height, int width) const;
  int hidden() const { return hidden_; }

 private:
  ConvSpec wx_, wh_;
  int wci_ = -1, wcf_ = -1, wco_ = -1;
  int hidden_ = 0;
};

// H_t: separate conv encoders for O_{t-1} and P_t, ConvLSTM on their
// concatenated stride-2 features, decoder to a residual image.
class Refiner {
 public:
  struct Output {
    ad::Var output;     // composited, clamped O_t
    ad::Var residual;   // decoded r_t
    ad::Var unclamped;  // O_{t-1} + r_t
    ConvLSTMState state;
  };

  Refiner() = default;
  Refiner(int branch_channels, int hidden, Rng& rng);

  // holes (optional): known pixels of O_t are taken from P_t.
  Output forward(const ad::Var& prev_output, const ad::Var& inpainted,
                 const ConvLSTMState& state, const Mask* holes = nullptr) const;
  ConvLSTMState zero_state(int height, int width) const;

  NetworkParams& params() { return params_; }
  const NetworkParams& params() const { return params_; }
  // Zeroes the last decoder layer so that r_t == 0.
  void zero_decoder_output();

 private:
  NetworkParams params_;
  ConvSpec enc_o1_, enc_o2_, enc_p1_, enc_p2_, dec1_, dec2_;
  ConvLSTMCell lstm_;
};

// Perceptual feature extractor contract.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<ad::Var> features(const ad::Var& frame) const = 0;
};

// Frozen random convolutional pyramid; each level halves the resolution.
class RandomConvPyramid final : public FeatureExtractor {
 public:
  explicit RandomConvPyramid(int levels = 3, std::uint64_t seed = 0x9e7f);
  std::vector<ad::Var> features(const ad::Var& frame) const override;

 private:
  NetworkParams params_;
  std::vector<ConvSpec> layers_;
};

struct Model {
  Model() = default;
  explicit Model(const ModelConfig& config);

  ModelConfig config;
  FrameInpainter hs;
  FlowCompleter hc;
  FlowBlender hf;
  Refiner ht;

  std::int64_t param_count() const;
  // (prefix, params) for hs, hc, hf, ht in a fixed order.
  std::vector<std::pair<std::string, const NetworkParams*>> networks() const;
  std::vector<std::pair<std::string, NetworkParams*>> networks();
};

}  // namespace frvi
