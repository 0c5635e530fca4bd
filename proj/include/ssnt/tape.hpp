#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssnt/math.hpp"
#include "ssnt/parameter.hpp"

namespace ssnt {

// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t index = 0;
};

// Upstream gradient injected at a recorded value before the reverse sweep.
struct Seed {
  Var var;
  Vec grad;
};

// Reverse-mode tape over a fixed set of vector primitives. Parameters are read
// from the ParameterSet passed at construction (read-only); their gradients are
// accumulated into a caller-provided GradientBuffer, so several tapes can run
// against one parameter snapshot concurrently.
class Tape {
 public:
  explicit Tape(const ParameterSet& params) : params_(&params) {}

  Var constant(Vec value);
  // Row `row` of a 2-D parameter (embedding lookup).
  Var lookup(ParamId table, std::size_t row);
  // W[:, offset : offset + |x|] * x.
  Var linear(ParamId weight, Var x, std::size_t col_offset = 0);
  Var add_bias(Var a, ParamId bias);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  // Elementwise product with a constant vector (dropout masks).
  Var scale(Var a, Vec factors);
  Var negate(Var a);
  Var activate(Activation kind, Var a);
  Var log_sigmoid(Var a);
  Var concat(Var a, Var b);
  // log softmax(a)[index], a scalar.
  Var log_softmax_pick(Var a, std::size_t index);

  const Vec& value(Var v) const { return nodes_[v.index].value; }
  double scalar(Var v) const { return nodes_[v.index].value[0]; }
  std::size_t size() const { return nodes_.size(); }

  // One reverse sweep. A second call without reset() is a UsageError.
  void backward(std::span<const Seed> seeds, GradientBuffer& grads);
  // Convenience for scalar outputs: each pair is (scalar var, upstream grad).
  void backward_scalars(std::span<const std::pair<Var, double>> seeds,
                        GradientBuffer& grads);
  void reset();

 private:
  enum class Op : std::uint8_t {
    constant,
    lookup,
    linear,
    add_bias,
    add,
    mul,
    scale,
    negate,
    sigmoid,
    tanh,
    relu,
    log_sigmoid,
    concat,
    log_softmax_pick,
  };

  struct Node {
    Op op = Op::constant;
    Var a{};
    Var b{};
    ParamId param{};
    std::size_t aux = 0;
    Vec value{};
    // Op-specific cache: softmax probabilities, scale factors.
    Vec cache{};
  };

  Var push(Node node);
  void check_var(Var v) const;

  const ParameterSet* params_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace ssnt
