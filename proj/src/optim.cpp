#include "frvi/optim.hpp"

#include <cmath>

namespace frvi {

bool AdamState::operator==(const AdamState& other) const {
  if (step != other.step || moments.size() != other.moments.size()) return false;
  for (const auto& [name, mo] : moments) {
    auto it = other.moments.find(name);
    if (it == other.moments.end()) return false;
    if (!(mo.m == it->second.m) || !(mo.v == it->second.v)) return false;
  }
  return true;
}

void adam_step(std::span<NetworkParams* const> nets, AdamState& state,
               const AdamConfig& cfg) {
  for (NetworkParams* net : nets) {
    if (!net->trainable()) continue;
    for (const auto& e : net->entries()) {
      const Tensor& g = e.var.node()->grad;
      if (g.size() > 0 && !g.all_finite()) {
        throw NumericError("non-finite gradient in parameter " + e.name);
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (NetworkParams* net : nets) {
    if (net->trainable()) {
      for (const auto& e : net->entries()) {
        ad::Node& node = *e.var.node();
        const Tensor& g = node.grad_buffer();
        auto [it, fresh] = state.moments.try_emplace(e.name);
        if (fresh) it->second = {Tensor(g.shape()), Tensor(g.shape())};
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        require_shape(m.shape(), g.shape(), e.name.c_str());
        m.array() = cfg.beta1 * m.array() + (1 - cfg.beta1) * g.array();
        v.array() = cfg.beta2 * v.array() + (1 - cfg.beta2) * g.array().square();
        node.value.array() -=
            cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
      }
    }
    net->zero_grad();
  }
}

void adam_step(NetworkParams& params, AdamState& state, const AdamConfig& cfg) {
  NetworkParams* nets[] = {&params};
  adam_step(nets, state, cfg);
}

double clip_grad_norm(std::span<NetworkParams* const> nets, double max_norm) {
  double sq = 0;
  for (NetworkParams* net : nets) {
    for (const auto& e : net->entries()) sq += e.var.node()->grad_buffer().matrix().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const double s = max_norm / norm;
    for (NetworkParams* net : nets) {
      for (const auto& e : net->entries()) e.var.node()->grad_buffer().matrix() *= s;
    }
  }
  return norm;
}

}  // namespace frvi
