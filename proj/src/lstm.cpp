#include "ssnt/lstm.hpp"

#include <cmath>

#include "ssnt/errors.hpp"
#include "ssnt/math.hpp"

namespace ssnt {

namespace {

LstmParams::Gate add_gate(ParameterSet& params, const std::string& prefix,
                          const std::string& gate, std::size_t input_dim,
                          std::size_t hidden_dim) {
  return LstmParams::Gate{
      params.add(prefix + ".W_" + gate + "x", {hidden_dim, input_dim}),
      params.add(prefix + ".W_" + gate + "h", {hidden_dim, hidden_dim}),
      params.add(prefix + ".b_" + gate, {hidden_dim}),
  };
}

// W^x x + W^h h + b, summed in that order.
Vec gate_preactivation(const ParameterSet& params, const LstmParams::Gate& gate,
                       std::span<const double> x, std::span<const double> h) {
  const Tensor& wx = params[gate.wx].value;
  const Tensor& wh = params[gate.wh].value;
  const Tensor& b = params[gate.b].value;
  const std::size_t hidden = wh.rows();
  Vec z(hidden);
  const double* wxd = wx.data().data();
  const double* whd = wh.data().data();
  for (std::size_t r = 0; r < hidden; ++r) {
    const double sx = dot(wxd + r * x.size(), x.data(), x.size());
    const double sh = dot(whd + r * h.size(), h.data(), h.size());
    z[r] = sx + sh + b[r];
  }
  return z;
}

Var gate_preactivation(Tape& tape, const LstmParams::Gate& gate, Var x, Var h) {
  return tape.add_bias(tape.add(tape.linear(gate.wx, x), tape.linear(gate.wh, h)),
                       gate.b);
}

}  // namespace

LstmParams add_lstm_params(ParameterSet& params, const std::string& prefix,
                           std::size_t input_dim, std::size_t hidden_dim) {
  if (input_dim == 0 || hidden_dim == 0) {
    throw ConfigError("LSTM dimensions must be positive");
  }
  LstmParams p;
  p.g = add_gate(params, prefix, "g", input_dim, hidden_dim);
  p.i = add_gate(params, prefix, "i", input_dim, hidden_dim);
  p.f = add_gate(params, prefix, "f", input_dim, hidden_dim);
  p.o = add_gate(params, prefix, "o", input_dim, hidden_dim);
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  return p;
}

void init_lstm_biases(ParameterSet& params, const LstmParams& lstm,
                      double forget_bias) {
  params[lstm.g.b].value.fill(0.0);
  params[lstm.i.b].value.fill(0.0);
  params[lstm.f.b].value.fill(forget_bias);
  params[lstm.o.b].value.fill(0.0);
}

LstmState lstm_step(const ParameterSet& params, const LstmParams& lstm,
                    std::span<const double> x, const LstmState& prev) {
  if (x.size() != lstm.input_dim || prev.h.size() != lstm.hidden_dim ||
      prev.c.size() != lstm.hidden_dim) {
    throw ConfigError("lstm_step: dimension mismatch");
  }
  Vec g = gate_preactivation(params, lstm.g, x, prev.h);
  Vec i = gate_preactivation(params, lstm.i, x, prev.h);
  Vec f = gate_preactivation(params, lstm.f, x, prev.h);
  Vec o = gate_preactivation(params, lstm.o, x, prev.h);
  LstmState next{Vec(lstm.hidden_dim), Vec(lstm.hidden_dim)};
  for (std::size_t k = 0; k < lstm.hidden_dim; ++k) {
    const double gk = std::tanh(g[k]);
    const double ik = sigmoid(i[k]);
    const double fk = sigmoid(f[k]);
    const double ok = sigmoid(o[k]);
    next.c[k] = gk * ik + prev.c[k] * fk;
    next.h[k] = std::tanh(next.c[k]) * ok;
  }
  return next;
}

LstmVars lstm_step(Tape& tape, const LstmParams& lstm, Var x,
                   const LstmVars& prev) {
  if (tape.value(x).size() != lstm.input_dim) {
    throw ConfigError("lstm_step: dimension mismatch");
  }
  Var g = tape.activate(Activation::tanh, gate_preactivation(tape, lstm.g, x, prev.h));
  Var i = tape.activate(Activation::sigmoid, gate_preactivation(tape, lstm.i, x, prev.h));
  Var f = tape.activate(Activation::sigmoid, gate_preactivation(tape, lstm.f, x, prev.h));
  Var o = tape.activate(Activation::sigmoid, gate_preactivation(tape, lstm.o, x, prev.h));
  Var c = tape.add(tape.mul(g, i), tape.mul(prev.c, f));
  Var h = tape.mul(tape.activate(Activation::tanh, c), o);
  return LstmVars{h, c};
}

}  // namespace ssnt
