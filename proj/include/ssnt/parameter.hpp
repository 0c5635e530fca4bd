#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssnt/rng.hpp"
#include "ssnt/tensor.hpp"

namespace ssnt {

// Index of a parameter inside its owning ParameterSet.
struct ParamId {
  std::uint32_t index = 0;
  bool operator==(const ParamId&) const = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  // Frozen parameters (e.g. the geometric emission probability, fitted in
  // closed form) are stored and checkpointed but never touched by the
  // optimizer.
  bool trainable = true;
};

// Ordered collection of parameters. Order is creation order and is the
// serialization and reduction order.
class ParameterSet {
 public:
  ParamId add(std::string name, std::vector<std::size_t> shape,
              bool trainable = true);

  Parameter& operator[](ParamId id) { return params_[id.index]; }
  const Parameter& operator[](ParamId id) const { return params_[id.index]; }
  Parameter& at(std::size_t k) { return params_[k]; }
  const Parameter& at(std::size_t k) const { return params_[k]; }
  std::size_t size() const { return params_.size(); }
  // Throws ConfigError when absent.
  ParamId find(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t scalar_count() const;

  // Uniform(-scale, scale) over every trainable value.
  void init_uniform(Rng& rng, double scale);

 private:
  std::vector<Parameter> params_;
};

// Per-worker gradient accumulator, shape-aligned with a ParameterSet.
class GradientBuffer {
 public:
  explicit GradientBuffer(const ParameterSet& params);

  Tensor& operator[](ParamId id) { return grads_[id.index]; }
  const Tensor& operator[](ParamId id) const { return grads_[id.index]; }
  Tensor& at(std::size_t k) { return grads_[k]; }
  const Tensor& at(std::size_t k) const { return grads_[k]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void scale(double factor);
  void add(const GradientBuffer& other);
  // Adds this buffer into every Parameter::grad.
  void accumulate_into(ParameterSet& params) const;

 private:
  std::vector<Tensor> grads_;
};

}  // namespace ssnt
