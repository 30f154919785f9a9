#include <cmath>

#include "frvi/nets.hpp"

namespace frvi {

NetworkParams::NetworkParams(const NetworkParams& other)
    : index_(other.index_), trainable_(other.trainable_) {
  entries_.reserve(other.entries_.size());
  for (const Entry& e : other.entries_) {
    auto node = std::make_shared<ad::Node>();
    node->value = e.var.value();
    node->grad = e.var.node()->grad;
    node->requires_grad = e.var.node()->requires_grad;
    entries_.push_back({e.name, ad::Var(std::move(node))});
  }
}

NetworkParams& NetworkParams::operator=(const NetworkParams& other) {
  if (this != &other) {
    NetworkParams copy(other);
    *this = std::move(copy);
  }
  return *this;
}

int NetworkParams::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw InputError("duplicate parameter " + name);
  ad::Var v(std::move(init), trainable_);
  v.node()->grad_buffer();
  entries_.push_back({name, std::move(v)});
  const int idx = static_cast<int>(entries_.size()) - 1;
  index_[name] = idx;
  return idx;
}

const ad::Var& NetworkParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter " + name);
  return entries_[it->second].var;
}

Tensor& NetworkParams::value(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw InputError("unknown parameter " + name);
  return entries_[it->second].var.node()->value;
}

bool NetworkParams::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::int64_t NetworkParams::param_count() const {
  std::int64_t n = 0;
  for (const Entry& e : entries_) n += e.var.value().size();
  return n;
}

std::int64_t count_params(const NetworkParams& params) {
  return params.param_count();
}

void NetworkParams::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (Entry& e : entries_) e.var.node()->requires_grad = trainable;
}

void NetworkParams::zero_grad() {
  for (Entry& e : entries_) e.var.node()->grad_buffer().matrix().setZero();
}

bool NetworkParams::grads_all_zero() const {
  for (const Entry& e : entries_) {
    const Tensor& g = e.var.node()->grad;
    if (g.size() > 0 && !g.matrix().isZero(0.0)) return false;
  }
  return true;
}

ConvSpec add_conv(NetworkParams& params, const std::string& name, int cin,
                  int cout, int k, int stride, Rng& rng, double gain,
                  bool bias) {
  const double bound = gain * std::sqrt(3.0 / (cin * k * k));
  Tensor w(cout, cin, k * k);
  for (std::int64_t i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -bound, bound);
  ConvSpec spec;
  spec.stride = stride;
  spec.weight = params.add(name + ".weight", std::move(w));
  if (bias) spec.bias = params.add(name + ".bias", Tensor(cout, 1, 1));
  return spec;
}

ad::Var apply_conv(const NetworkParams& params, const ConvSpec& conv,
                   const ad::Var& x) {
  return ad::conv2d(x, params.var(conv.weight),
                    conv.bias >= 0 ? params.var(conv.bias) : ad::Var(),
                    conv.stride);
}

ad::PartialConvResult apply_partial_conv(const NetworkParams& params,
                                         const ConvSpec& conv,
                                         const ad::Var& x,
                                         const Tensor& known) {
  return ad::partial_conv2d(x, known, params.var(conv.weight),
                            conv.bias >= 0 ? params.var(conv.bias) : ad::Var(),
                            conv.stride);
}

}  // namespace frvi
