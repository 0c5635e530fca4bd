#pragma once

#include <span>
#include <string>

#include "ssnt/parameter.hpp"
#include "ssnt/tape.hpp"

namespace ssnt {

// One LSTM layer: per-gate input weights W^{*x} (H x D), recurrent weights
// W^{*h} (H x H) and biases b^* for the candidate g and gates i, f, o.
struct LstmParams {
  struct Gate {
    ParamId wx;
    ParamId wh;
    ParamId b;
  };
  Gate g;
  Gate i;
  Gate f;
  Gate o;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

struct LstmState {
  Vec h;
  Vec c;

  static LstmState zeros(std::size_t hidden_dim) {
    return LstmState{Vec(hidden_dim, 0.0), Vec(hidden_dim, 0.0)};
  }
  bool operator==(const LstmState&) const = default;
};

// Registers the twelve parameters under `prefix` (e.g. "encoder.fwd").
LstmParams add_lstm_params(ParameterSet& params, const std::string& prefix,
                           std::size_t input_dim, std::size_t hidden_dim);

// Forget-gate biases to `forget_bias`, other biases to 0.
void init_lstm_biases(ParameterSet& params, const LstmParams& lstm,
                      double forget_bias = 1.0);

// g = tanh(W^gx x + W^gh h + b^g); i, f, o likewise with sigmoid;
// c' = g*i + c*f; h' = tanh(c')*o.
LstmState lstm_step(const ParameterSet& params, const LstmParams& lstm,
                    std::span<const double> x, const LstmState& prev);

// Same step recorded on a tape.
struct LstmVars {
  Var h;
  Var c;
};
LstmVars lstm_step(Tape& tape, const LstmParams& lstm, Var x,
                   const LstmVars& prev);

}  // namespace ssnt
