#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssnt/lstm.hpp"
#include "ssnt/parameter.hpp"
#include "ssnt/rng.hpp"

namespace ssnt {

enum class EncoderDirection { uni, bi };
enum class TransitionKind { geometric, neural };

std::string to_string(EncoderDirection d);
std::string to_string(TransitionKind k);
EncoderDirection parse_encoder_direction(const std::string& s);
TransitionKind parse_transition_kind(const std::string& s);

struct SsntConfig {
  std::size_t hidden_dim = 32;
  std::size_t embed_dim = 32;
  EncoderDirection encoder = EncoderDirection::uni;
  TransitionKind transition = TransitionKind::neural;
  double dropout = 0.0;
  // 0 means "same as hidden_dim".
  std::size_t transition_hidden_dim = 0;
  // Largest I*J accepted by the chart builders.
  std::size_t max_cells = 4096;

  std::size_t encoder_dim() const {
    return encoder == EncoderDirection::bi ? 2 * hidden_dim : hidden_dim;
  }
  std::size_t transition_dim() const {
    return transition_hidden_dim == 0 ? hidden_dim : transition_hidden_dim;
  }
};

// Parameter handles of an SSNT model. The word-output and transition weights
// act on [h_i ; s_j]: columns [0, enc_dim) see the encoder state, the rest the
// decoder state.
struct SsntLayout {
  ParamId src_embed;
  ParamId tgt_embed;
  LstmParams encoder_fwd;
  LstmParams encoder_bwd;  // only registered for bidirectional encoders
  LstmParams decoder;
  ParamId word_w;         // |V_y| x (enc_dim + H)
  ParamId word_b;         // |V_y|
  ParamId transition_w;   // T x (enc_dim + H)
  ParamId transition_b;   // T
  ParamId readout_w;      // 1 x T
  ParamId readout_b;      // 1
  ParamId emission;       // geometric e, frozen
};

class SsntModel {
 public:
  SsntModel(SsntConfig config, std::size_t src_vocab, std::size_t tgt_vocab);

  // Uniform(-0.08, 0.08) weights, forget-gate biases 1, other biases 0, e = 0.5.
  void initialize(Rng& rng);

  const SsntConfig& config() const { return config_; }
  const SsntLayout& layout() const { return layout_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t src_vocab_size() const { return src_vocab_; }
  std::size_t tgt_vocab_size() const { return tgt_vocab_; }
  std::size_t encoder_dim() const { return config_.encoder_dim(); }

  // Geometric emission probability e (only used for TransitionKind::geometric).
  double emission() const;
  void set_emission(double e);

 private:
  SsntConfig config_;
  std::size_t src_vocab_;
  std::size_t tgt_vocab_;
  ParameterSet params_;
  SsntLayout layout_;
};

struct EmitShift {
  double log_emit;
  double log_shift;
};

// Encoder states h_1..h_I for x (which must end in EOS).
std::vector<Vec> encode(const SsntModel& model, std::span<const int> x);

// Forward (left-to-right) encoder state before any input, and after
// additionally reading `token`; its h is the encoder state of a
// unidirectional model at that position.
LstmState encoder_start(const SsntModel& model);
LstmState encoder_advance(const SsntModel& model, const LstmState& state, int token);

// Decoder state after reading BOS only (s_1).
LstmState decoder_start(const SsntModel& model);
// Decoder state after additionally reading `token`.
LstmState decoder_advance(const SsntModel& model, const LstmState& state, int token);
// s_1..s_J: s_j has consumed BOS, y_1..y_{j-1} and never y_j.
std::vector<LstmState> decoder_prefix_states(const SsntModel& model,
                                             std::span<const int> y);

// log softmax(W^w [h; s] + b^w).
Vec word_log_dist(const SsntModel& model, std::span<const double> h,
                  std::span<const double> s);

// Neural transition: p_emit = sigma(w . tanh(W^t [h; s] + b^t) + b).
// UsageError under the geometric kind.
EmitShift emit_logprob(const SsntModel& model, std::span<const double> h,
                       std::span<const double> s);

// Emit/shift log-probabilities for either transition kind.
EmitShift transition_probs(const SsntModel& model, std::span<const double> h,
                           std::span<const double> s);

struct LengthPair {
  std::size_t input_len;
  std::size_t output_len;
};

// e = sum J / (sum I + sum J); lengths include the terminal EOS.
double mle_emission(std::span<const LengthPair> corpus);

// Source- and target-side halves of the word and transition pre-activations,
// so per-cell scores cost one vector add.
struct SourceProjection {
  Vec word;        // W^w[:, :enc] h
  Vec transition;  // W^t[:, :enc] h
};
struct TargetProjection {
  Vec word;        // W^w[:, enc:] s + b^w
  Vec transition;  // W^t[:, enc:] s + b^t
};

SourceProjection project_source(const SsntModel& model, std::span<const double> h);
TargetProjection project_target(const SsntModel& model, std::span<const double> s);
Vec word_log_dist(const SourceProjection& src, const TargetProjection& tgt);
EmitShift transition_probs(const SsntModel& model, const SourceProjection& src,
                           const TargetProjection& tgt);

}  // namespace ssnt
