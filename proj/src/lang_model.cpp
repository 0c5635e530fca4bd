#include "ssnt/lang_model.hpp"

#include <cmath>
#include <string>

#include "ssnt/errors.hpp"
#include "ssnt/math.hpp"
#include "ssnt/optim.hpp"
#include "ssnt/tape.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {

namespace {

constexpr double kInitScale = 0.08;

void check_ids(const LmModel& model, std::span<const int> y) {
  for (int id : y) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.vocab_size()) {
      throw InputError("language model: token id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(model.vocab_size()));
    }
  }
}

}  // namespace

LmModel::LmModel(LmConfig config, std::size_t vocab_size)
    : config_(config), vocab_(vocab_size) {
  if (config_.layers < 1 || config_.layers > 2) throw ConfigError("lm layers must be 1 or 2");
  if (config_.embed_dim == 0 || config_.hidden_dim == 0) {
    throw ConfigError("lm dimensions must be >= 1");
  }
  if (vocab_size < 3) throw ConfigError("lm vocabulary must hold the reserved tokens");
  if (!(config_.dropout >= 0.0) || config_.dropout >= 1.0) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  embed_ = params_.add("lm.embed", {vocab_size, config_.embed_dim});
  std::size_t in = config_.embed_dim;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    layers_.push_back(add_lstm_params(params_, "lm.layer" + std::to_string(l), in,
                                      config_.hidden_dim));
    in = config_.hidden_dim;
  }
  out_w_ = params_.add("lm.out.W", {vocab_size, config_.hidden_dim});
  out_b_ = params_.add("lm.out.b", {vocab_size});
}

void LmModel::initialize(Rng& rng) {
  params_.init_uniform(rng, kInitScale);
  for (const auto& l : layers_) init_lstm_biases(params_, l);
  params_[out_b_].value.fill(0.0);
}

LmState lm_start(const LmModel& model) {
  LmState s;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    s.layers.push_back(LstmState::zeros(model.config().hidden_dim));
  }
  return lm_advance(model, s, Vocabulary::kBos);
}

LmState lm_advance(const LmModel& model, const LmState& state, int token) {
  const int ids[1] = {token};
  check_ids(model, ids);
  LmState next;
  std::span<const double> input = model.params()[model.embed()].value.row(
      static_cast<std::size_t>(token));
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    next.layers.push_back(lstm_step(model.params(), model.layers()[l], input, state.layers[l]));
    input = next.layers.back().h;
  }
  return next;
}

Vec lm_next_log_dist(const LmModel& model, const LmState& state) {
  const Tensor& w = model.params()[model.out_w()].value;
  const Tensor& b = model.params()[model.out_b()].value;
  const Vec& h = state.layers.back().h;
  Vec logits(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    logits[r] = dot(w.data().data() + r * h.size(), h.data(), h.size()) + b[r];
  }
  return log_softmax(logits);
}

std::vector<double> lm_prefix_logprobs(const LmModel& model, std::span<const int> y) {
  if (y.empty()) throw InputError("language model: empty sequence");
  check_ids(model, y);
  std::vector<double> out;
  out.reserve(y.size());
  LmState s = lm_start(model);
  double total = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    total += lm_next_log_dist(model, s)[static_cast<std::size_t>(y[j])];
    out.push_back(total);
    if (j + 1 < y.size()) s = lm_advance(model, s, y[j]);
  }
  return out;
}

double lm_logprob(const LmModel& model, std::span<const int> y) {
  return lm_prefix_logprobs(model, y).back();
}

double lm_example_gradient(const LmModel& model, std::span<const int> y,
                           GradientBuffer& grads, Rng* dropout) {
  if (y.empty()) throw InputError("language model: empty sequence");
  check_ids(model, y);
  const double rate = model.config().dropout;
  const std::size_t hidden = model.config().hidden_dim;
  Tape tape(model.params());
  auto drop = [&](Var v) {
    if (dropout == nullptr || rate <= 0.0) return v;
    return tape.scale(v, dropout_mask(tape.value(v).size(), rate, *dropout, true));
  };
  std::vector<LstmVars> states;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    states.push_back({tape.constant(Vec(hidden, 0.0)), tape.constant(Vec(hidden, 0.0))});
  }
  std::vector<std::pair<Var, double>> seeds;
  double loss = 0.0;
  int prev = Vocabulary::kBos;
  for (std::size_t j = 0; j < y.size(); ++j) {
    Var input = drop(tape.lookup(model.embed(), static_cast<std::size_t>(prev)));
    for (std::size_t l = 0; l < states.size(); ++l) {
      states[l] = lstm_step(tape, model.layers()[l], input, states[l]);
      input = drop(states[l].h);
    }
    Var logits = tape.add_bias(tape.linear(model.out_w(), input), model.out_b());
    Var lp = tape.log_softmax_pick(logits, static_cast<std::size_t>(y[j]));
    loss -= tape.scalar(lp);
    seeds.emplace_back(lp, -1.0);
    prev = y[j];
  }
  tape.backward_scalars(seeds, grads);
  return loss;
}

double lm_train_epoch(LmModel& model, std::span<const std::vector<int>> corpus,
                      const TrainOptions& options, std::uint64_t epoch,
                      std::uint64_t& step) {
  if (corpus.empty()) throw InputError("language model: empty training corpus");
  const EpochStats stats = train_epoch(
      model.params(), corpus.size(),
      [&](std::size_t k, GradientBuffer& g, Rng& rng) {
        return lm_example_gradient(model, corpus[k], g, &rng);
      },
      [&](std::size_t k) { return corpus[k].size(); }, options, epoch, step);
  return stats.mean_token_nll();
}

double lm_mean_nll(const LmModel& model, std::span<const std::vector<int>> corpus) {
  if (corpus.empty()) throw InputError("language model: empty evaluation corpus");
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& y : corpus) {
    total -= lm_logprob(model, y);
    tokens += y.size();
  }
  return total / static_cast<double>(tokens);
}

double perplexity(const LmModel& model, std::span<const std::vector<int>> corpus) {
  return std::exp(lm_mean_nll(model, corpus));
}

}  // namespace ssnt
