#pragma once

// Adam with bias correction, global-norm gradient clipping.

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "frvi/nets.hpp"

namespace frvi {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  struct Moments {
    Tensor m, v;
  };
  std::map<std::string, Moments> moments;  // keyed by parameter name
  std::int64_t step = 0;

  bool operator==(const AdamState& other) const;
};

// Updates every trainable parameter in place and zeroes all gradients.
// Throws NumericError naming the first parameter with a non-finite gradient;
// in that case nothing is modified.
void adam_step(std::span<NetworkParams* const> nets, AdamState& state,
               const AdamConfig& cfg);
void adam_step(NetworkParams& params, AdamState& state, const AdamConfig& cfg);

// Scales gradients so that their joint l2 norm is at most max_norm. Returns
// the norm before scaling.
double clip_grad_norm(std::span<NetworkParams* const> nets, double max_norm);

}  // namespace frvi
