#include "ssnt/parameter.hpp"

#include "ssnt/errors.hpp"

namespace ssnt {

ParamId ParameterSet::add(std::string name, std::vector<std::size_t> shape,
                          bool trainable) {
  for (const auto& p : params_) {
    if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
  }
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(shape);
  p.grad = Tensor(shape);
  p.adam_m = Tensor(shape);
  p.adam_v = Tensor(shape);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return ParamId{static_cast<std::uint32_t>(params_.size() - 1)};
}

ParamId ParameterSet::find(const std::string& name) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].name == name) return ParamId{static_cast<std::uint32_t>(k)};
  }
  throw ConfigError("no parameter named " + name);
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::init_uniform(Rng& rng, double scale) {
  for (auto& p : params_) {
    if (!p.trainable) continue;
    for (double& v : p.value.data()) v = rng.uniform(-scale, scale);
  }
}

GradientBuffer::GradientBuffer(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.emplace_back(p.value.shape());
}

void GradientBuffer::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradientBuffer::scale(double factor) {
  for (auto& g : grads_) {
    for (double& v : g.data()) v *= factor;
  }
}

void GradientBuffer::add(const GradientBuffer& other) {
  if (other.grads_.size() != grads_.size()) {
    throw InternalError("gradient buffers of different models");
  }
  for (std::size_t k = 0; k < grads_.size(); ++k) {
    auto dst = grads_[k].data();
    auto src = other.grads_[k].data();
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
  }
}

void GradientBuffer::accumulate_into(ParameterSet& params) const {
  if (params.size() != grads_.size()) {
    throw InternalError("gradient buffer does not match parameter set");
  }
  for (std::size_t k = 0; k < grads_.size(); ++k) {
    auto dst = params.at(k).grad.data();
    auto src = grads_[k].data();
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
  }
}

}  // namespace ssnt
