#pragma once

#include <span>
#include <vector>

#include "ssnt/lstm.hpp"
#include "ssnt/parameter.hpp"
#include "ssnt/rng.hpp"
#include "ssnt/training.hpp"

namespace ssnt {

struct LmConfig {
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t layers = 1;  // 1 or 2
  double dropout = 0.0;
};

// Recurrent language model p(y) = prod_j p(y_j | BOS, y_1..y_{j-1}) with
// untied input and output embeddings.
class LmModel {
 public:
  LmModel(LmConfig config, std::size_t vocab_size);

  // Uniform(-0.08, 0.08) weights, forget-gate biases 1, other biases 0.
  void initialize(Rng& rng);

  const LmConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  ParamId embed() const { return embed_; }
  const std::vector<LstmParams>& layers() const { return layers_; }
  ParamId out_w() const { return out_w_; }
  ParamId out_b() const { return out_b_; }

 private:
  LmConfig config_;
  std::size_t vocab_;
  ParameterSet params_;
  ParamId embed_;
  std::vector<LstmParams> layers_;
  ParamId out_w_;
  ParamId out_b_;
};

// Per-layer recurrent state after consuming BOS and a prefix.
struct LmState {
  std::vector<LstmState> layers;
  bool operator==(const LmState&) const = default;
};

LmState lm_start(const LmModel& model);
LmState lm_advance(const LmModel& model, const LmState& state, int token);
// log p(. | prefix consumed by `state`).
Vec lm_next_log_dist(const LmModel& model, const LmState& state);

// sum_j log p(y_j | y_1^{j-1}). InputError on an empty sequence or an id
// outside the vocabulary.
double lm_logprob(const LmModel& model, std::span<const int> y);
// Running sums: element j is log p(y_1 .. y_{j+1}).
std::vector<double> lm_prefix_logprobs(const LmModel& model, std::span<const int> y);

// Accumulates the gradient of -log p(y) and returns it; dropout on LSTM
// inputs and outputs when a stream is given.
double lm_example_gradient(const LmModel& model, std::span<const int> y,
                           GradientBuffer& grads, Rng* dropout = nullptr);

// One training pass; returns the mean per-token NLL (EOS counted).
double lm_train_epoch(LmModel& model, std::span<const std::vector<int>> corpus,
                      const TrainOptions& options, std::uint64_t epoch,
                      std::uint64_t& step);

// Mean per-token NLL and its exponential over a corpus.
double lm_mean_nll(const LmModel& model, std::span<const std::vector<int>> corpus);
double perplexity(const LmModel& model, std::span<const std::vector<int>> corpus);

}  // namespace ssnt
