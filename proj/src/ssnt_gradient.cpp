#include "ssnt/ssnt_gradient.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "ssnt/errors.hpp"
#include "ssnt/lstm.hpp"
#include "ssnt/optim.hpp"
#include "ssnt/tape.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {

namespace {

class Dropper {
 public:
  Dropper(Tape& tape, double rate, Rng* rng)
      : tape_(tape), rate_(rate), rng_(rng) {}

  Var operator()(Var v) {
    if (rng_ == nullptr || rate_ <= 0.0) return v;
    return tape_.scale(v, dropout_mask(tape_.value(v).size(), rate_, *rng_, true));
  }

 private:
  Tape& tape_;
  double rate_;
  Rng* rng_;
};

std::vector<Var> encode_on_tape(Tape& tape, const SsntModel& model,
                                std::span<const int> x, Dropper& drop) {
  const auto& layout = model.layout();
  const std::size_t hidden = model.config().hidden_dim;
  const std::size_t n = x.size();
  std::vector<Var> inputs(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = tape.lookup(layout.src_embed, static_cast<std::size_t>(x[i]));
  }
  std::vector<Var> states(n);
  LstmVars fwd{tape.constant(Vec(hidden, 0.0)), tape.constant(Vec(hidden, 0.0))};
  for (std::size_t i = 0; i < n; ++i) {
    fwd = lstm_step(tape, layout.encoder_fwd, drop(inputs[i]), fwd);
    states[i] = drop(fwd.h);
  }
  if (model.config().encoder == EncoderDirection::bi) {
    LstmVars bwd{tape.constant(Vec(hidden, 0.0)), tape.constant(Vec(hidden, 0.0))};
    std::vector<Var> back(n);
    for (std::size_t i = n; i-- > 0;) {
      bwd = lstm_step(tape, layout.encoder_bwd, drop(inputs[i]), bwd);
      back[i] = drop(bwd.h);
    }
    for (std::size_t i = 0; i < n; ++i) states[i] = tape.concat(states[i], back[i]);
  }
  return states;
}

std::vector<Var> decode_on_tape(Tape& tape, const SsntModel& model,
                                std::span<const int> y, Dropper& drop) {
  const auto& layout = model.layout();
  const std::size_t hidden = model.config().hidden_dim;
  std::vector<Var> states;
  states.reserve(y.size());
  LstmVars s{tape.constant(Vec(hidden, 0.0)), tape.constant(Vec(hidden, 0.0))};
  int prev = Vocabulary::kBos;
  for (std::size_t j = 0; j < y.size(); ++j) {
    Var in = drop(tape.lookup(layout.tgt_embed, static_cast<std::size_t>(prev)));
    s = lstm_step(tape, layout.decoder, in, s);
    states.push_back(drop(s.h));
    prev = y[j];
  }
  return states;
}

void check_ids(std::span<const int> ids, std::size_t vocab, const char* side) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InputError(std::string(side) + " token id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

}  // namespace

double example_gradient(const SsntModel& model, std::span<const int> x,
                        std::span<const int> y, GradientBuffer& grads,
                        Rng* dropout) {
  if (x.empty() || y.empty()) throw InputError("example_gradient: empty sequence");
  check_ids(x, model.src_vocab_size(), "source");
  check_ids(y, model.tgt_vocab_size(), "target");
  const std::size_t I = x.size();
  const std::size_t J = y.size();
  if (I * J > model.config().max_cells) {
    throw BudgetError("pair with I*J = " + std::to_string(I * J) +
                      " exceeds the lattice budget of " +
                      std::to_string(model.config().max_cells));
  }
  const auto& layout = model.layout();
  const std::size_t enc = model.encoder_dim();
  const bool neural = model.config().transition == TransitionKind::neural;

  Tape tape(model.params());
  Dropper drop(tape, model.config().dropout, dropout);
  const std::vector<Var> h = encode_on_tape(tape, model, x, drop);
  const std::vector<Var> s = decode_on_tape(tape, model, y, drop);

  std::vector<Var> src_word(I), src_trans(I);
  for (std::size_t i = 0; i < I; ++i) {
    src_word[i] = tape.linear(layout.word_w, h[i], 0);
    if (neural) src_trans[i] = tape.linear(layout.transition_w, h[i], 0);
  }

  Grid word(I, J), emit(I, J), shift(I, J);
  std::vector<Var> word_var(I * J), emit_var(I * J), shift_var(I * J);
  const double geo_emit = neural ? 0.0 : std::log(model.emission());
  const double geo_shift = neural ? 0.0 : std::log1p(-model.emission());
  for (std::size_t j = 0; j < J; ++j) {
    Var tgt_word = tape.add_bias(tape.linear(layout.word_w, s[j], enc), layout.word_b);
    Var tgt_trans{};
    if (neural) {
      tgt_trans = tape.add_bias(tape.linear(layout.transition_w, s[j], enc),
                                layout.transition_b);
    }
    for (std::size_t i = 0; i < I; ++i) {
      const std::size_t c = i * J + j;
      word_var[c] = tape.log_softmax_pick(tape.add(src_word[i], tgt_word),
                                          static_cast<std::size_t>(y[j]));
      word(i, j) = tape.scalar(word_var[c]);
      if (neural) {
        Var hidden = tape.activate(Activation::tanh, tape.add(src_trans[i], tgt_trans));
        Var a = tape.add_bias(tape.linear(layout.readout_w, hidden, 0), layout.readout_b);
        emit_var[c] = tape.log_sigmoid(a);
        shift_var[c] = tape.log_sigmoid(tape.negate(a));
        emit(i, j) = tape.scalar(emit_var[c]);
        shift(i, j) = tape.scalar(shift_var[c]);
      } else {
        emit(i, j) = geo_emit;
        shift(i, j) = geo_shift;
      }
    }
  }

  Lattice lat = Lattice::from_scores(std::move(word), std::move(emit), std::move(shift));
  fill_forward(lat);
  const double log_z = lat.log_marginal();
  if (log_z == kNegInf) throw InputError("example_gradient: zero marginal probability");
  fill_backward(lat);
  const CellWeights w = loss_cell_weights(posteriors(lat));

  std::vector<std::pair<Var, double>> seeds;
  seeds.reserve(3 * I * J);
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      const std::size_t c = i * J + j;
      if (w.word(i, j) != 0.0) seeds.emplace_back(word_var[c], w.word(i, j));
      if (!neural) continue;
      if (w.emit(i, j) != 0.0) seeds.emplace_back(emit_var[c], w.emit(i, j));
      if (w.shift(i, j) != 0.0) seeds.emplace_back(shift_var[c], w.shift(i, j));
    }
  }
  tape.backward_scalars(seeds, grads);
  return -log_z;
}

}  // namespace ssnt
