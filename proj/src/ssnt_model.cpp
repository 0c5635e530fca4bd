#include "ssnt/ssnt_model.hpp"

#include <cmath>

#include "ssnt/errors.hpp"
#include "ssnt/math.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {

namespace {

constexpr double kInitScale = 0.08;

// W[:, offset : offset + |x|] x, accumulated left to right like Tape::linear.
Vec linear(const Tensor& w, std::span<const double> x, std::size_t offset) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  Vec out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data().data() + r * cols + offset;
    out[r] = dot(wr, x.data(), x.size());
  }
  return out;
}

void add_in_place(Vec& a, std::span<const double> b) {
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
}

void check_ids(std::span<const int> ids, std::size_t vocab, const char* side) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InputError(std::string(side) + " token id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

std::span<const double> embedding(const SsntModel& model, ParamId table, int id) {
  return model.params()[table].value.row(static_cast<std::size_t>(id));
}

}  // namespace

std::string to_string(EncoderDirection d) {
  return d == EncoderDirection::bi ? "bi" : "uni";
}

std::string to_string(TransitionKind k) {
  return k == TransitionKind::neural ? "neural" : "geometric";
}

EncoderDirection parse_encoder_direction(const std::string& s) {
  if (s == "uni") return EncoderDirection::uni;
  if (s == "bi") return EncoderDirection::bi;
  throw ConfigError("encoder must be 'uni' or 'bi', got '" + s + "'");
}

TransitionKind parse_transition_kind(const std::string& s) {
  if (s == "geometric") return TransitionKind::geometric;
  if (s == "neural") return TransitionKind::neural;
  throw ConfigError("transition_kind must be 'geometric' or 'neural', got '" + s + "'");
}

SsntModel::SsntModel(SsntConfig config, std::size_t src_vocab, std::size_t tgt_vocab)
    : config_(config), src_vocab_(src_vocab), tgt_vocab_(tgt_vocab) {
  if (config_.hidden_dim == 0 || config_.embed_dim == 0) {
    throw ConfigError("hidden_dim and embed_dim must be >= 1");
  }
  if (src_vocab < 3 || tgt_vocab < 3) {
    throw ConfigError("vocabularies must hold at least the reserved tokens");
  }
  if (!(config_.dropout >= 0.0) || config_.dropout >= 1.0) {
    throw ConfigError("dropout must be in [0, 1)");
  }
  const std::size_t h = config_.hidden_dim;
  const std::size_t enc = config_.encoder_dim();
  const std::size_t t = config_.transition_dim();
  layout_.src_embed = params_.add("src_embed", {src_vocab, config_.embed_dim});
  layout_.tgt_embed = params_.add("tgt_embed", {tgt_vocab, config_.embed_dim});
  layout_.encoder_fwd = add_lstm_params(params_, "encoder.fwd", config_.embed_dim, h);
  if (config_.encoder == EncoderDirection::bi) {
    layout_.encoder_bwd = add_lstm_params(params_, "encoder.bwd", config_.embed_dim, h);
  }
  layout_.decoder = add_lstm_params(params_, "decoder", config_.embed_dim, h);
  layout_.word_w = params_.add("word.W", {tgt_vocab, enc + h});
  layout_.word_b = params_.add("word.b", {tgt_vocab});
  layout_.transition_w = params_.add("transition.W", {t, enc + h});
  layout_.transition_b = params_.add("transition.b", {t});
  layout_.readout_w = params_.add("transition.readout_w", {1, t});
  layout_.readout_b = params_.add("transition.readout_b", {1});
  layout_.emission = params_.add("transition.emission", {1}, /*trainable=*/false);
  params_[layout_.emission].value[0] = 0.5;
}

void SsntModel::initialize(Rng& rng) {
  params_.init_uniform(rng, kInitScale);
  init_lstm_biases(params_, layout_.encoder_fwd);
  if (config_.encoder == EncoderDirection::bi) {
    init_lstm_biases(params_, layout_.encoder_bwd);
  }
  init_lstm_biases(params_, layout_.decoder);
  params_[layout_.word_b].value.fill(0.0);
  params_[layout_.transition_b].value.fill(0.0);
  params_[layout_.readout_b].value.fill(0.0);
  params_[layout_.emission].value[0] = 0.5;
}

double SsntModel::emission() const { return params_[layout_.emission].value[0]; }

void SsntModel::set_emission(double e) {
  if (!(e > 0.0 && e < 1.0)) throw ConfigError("emission probability must be in (0, 1)");
  params_[layout_.emission].value[0] = e;
}

std::vector<Vec> encode(const SsntModel& model, std::span<const int> x) {
  if (x.empty()) throw InputError("encode: empty input sequence");
  check_ids(x, model.src_vocab_size(), "source");
  const auto& layout = model.layout();
  const auto& params = model.params();
  const std::size_t hidden = model.config().hidden_dim;
  const std::size_t n = x.size();

  std::vector<Vec> states(n);
  LstmState fwd = LstmState::zeros(hidden);
  for (std::size_t i = 0; i < n; ++i) {
    fwd = lstm_step(params, layout.encoder_fwd, embedding(model, layout.src_embed, x[i]), fwd);
    states[i] = fwd.h;
  }
  if (model.config().encoder == EncoderDirection::bi) {
    LstmState bwd = LstmState::zeros(hidden);
    for (std::size_t i = n; i-- > 0;) {
      bwd = lstm_step(params, layout.encoder_bwd, embedding(model, layout.src_embed, x[i]), bwd);
      states[i].insert(states[i].end(), bwd.h.begin(), bwd.h.end());
    }
  }
  return states;
}

LstmState encoder_start(const SsntModel& model) {
  return LstmState::zeros(model.config().hidden_dim);
}

LstmState encoder_advance(const SsntModel& model, const LstmState& state, int token) {
  const int ids[1] = {token};
  check_ids(ids, model.src_vocab_size(), "source");
  const auto& layout = model.layout();
  return lstm_step(model.params(), layout.encoder_fwd,
                   embedding(model, layout.src_embed, token), state);
}

LstmState decoder_start(const SsntModel& model) {
  return decoder_advance(model, LstmState::zeros(model.config().hidden_dim),
                         Vocabulary::kBos);
}

LstmState decoder_advance(const SsntModel& model, const LstmState& state, int token) {
  const int ids[1] = {token};
  check_ids(ids, model.tgt_vocab_size(), "target");
  const auto& layout = model.layout();
  return lstm_step(model.params(), layout.decoder,
                   embedding(model, layout.tgt_embed, token), state);
}

std::vector<LstmState> decoder_prefix_states(const SsntModel& model,
                                             std::span<const int> y) {
  check_ids(y, model.tgt_vocab_size(), "target");
  std::vector<LstmState> states;
  states.reserve(y.size());
  if (y.empty()) return states;
  states.push_back(decoder_start(model));
  for (std::size_t j = 1; j < y.size(); ++j) {
    states.push_back(decoder_advance(model, states.back(), y[j - 1]));
  }
  return states;
}

SourceProjection project_source(const SsntModel& model, std::span<const double> h) {
  if (h.size() != model.encoder_dim()) throw ConfigError("encoder state size mismatch");
  const auto& layout = model.layout();
  const auto& params = model.params();
  SourceProjection p;
  p.word = linear(params[layout.word_w].value, h, 0);
  if (model.config().transition == TransitionKind::neural) {
    p.transition = linear(params[layout.transition_w].value, h, 0);
  }
  return p;
}

TargetProjection project_target(const SsntModel& model, std::span<const double> s) {
  if (s.size() != model.config().hidden_dim) {
    throw ConfigError("decoder state size mismatch");
  }
  const auto& layout = model.layout();
  const auto& params = model.params();
  const std::size_t enc = model.encoder_dim();
  TargetProjection p;
  p.word = linear(params[layout.word_w].value, s, enc);
  add_in_place(p.word, params[layout.word_b].value.data());
  if (model.config().transition == TransitionKind::neural) {
    p.transition = linear(params[layout.transition_w].value, s, enc);
    add_in_place(p.transition, params[layout.transition_b].value.data());
  }
  return p;
}

Vec word_log_dist(const SourceProjection& src, const TargetProjection& tgt) {
  Vec logits = src.word;
  add_in_place(logits, tgt.word);
  return log_softmax(logits);
}

EmitShift transition_probs(const SsntModel& model, const SourceProjection& src,
                           const TargetProjection& tgt) {
  if (model.config().transition == TransitionKind::geometric) {
    const double e = model.emission();
    return EmitShift{std::log(e), std::log1p(-e)};
  }
  const auto& layout = model.layout();
  const auto& params = model.params();
  Vec hidden = src.transition;
  add_in_place(hidden, tgt.transition);
  for (double& v : hidden) v = std::tanh(v);
  Vec a = linear(params[layout.readout_w].value, hidden, 0);
  a[0] += params[layout.readout_b].value[0];
  return EmitShift{log_sigmoid(a[0]), log_sigmoid(-a[0])};
}

Vec word_log_dist(const SsntModel& model, std::span<const double> h,
                  std::span<const double> s) {
  return word_log_dist(project_source(model, h), project_target(model, s));
}

EmitShift emit_logprob(const SsntModel& model, std::span<const double> h,
                       std::span<const double> s) {
  if (model.config().transition != TransitionKind::neural) {
    throw UsageError("emit_logprob requires the neural transition model");
  }
  return transition_probs(model, project_source(model, h), project_target(model, s));
}

EmitShift transition_probs(const SsntModel& model, std::span<const double> h,
                           std::span<const double> s) {
  return transition_probs(model, project_source(model, h), project_target(model, s));
}

double mle_emission(std::span<const LengthPair> corpus) {
  if (corpus.empty()) throw InputError("mle_emission: empty corpus");
  std::size_t total_in = 0;
  std::size_t total_out = 0;
  for (const auto& p : corpus) {
    total_in += p.input_len;
    total_out += p.output_len;
  }
  if (total_in + total_out == 0) throw InputError("mle_emission: all lengths are zero");
  return static_cast<double>(total_out) / static_cast<double>(total_in + total_out);
}

}  // namespace ssnt
