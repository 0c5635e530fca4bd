#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ssnt/errors.hpp"
#include "ssnt/gradcheck.hpp"
#include "ssnt/lang_model.hpp"
#include "ssnt/vocab.hpp"

namespace ssnt {
namespace {

LmConfig small_config(std::size_t layers = 1) {
  LmConfig cfg;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 8;
  cfg.layers = layers;
  return cfg;
}

TEST(LanguageModel, ZeroWeightsAreUniform) {
  const LmModel m(small_config(), 8);
  const std::vector<int> y{3, 4, Vocabulary::kEos};
  EXPECT_NEAR(lm_logprob(m, y), 3.0 * std::log(1.0 / 8.0), 1e-12);
  const std::vector<std::vector<int>> corpus{y, {5, Vocabulary::kEos}};
  EXPECT_NEAR(perplexity(m, corpus), 8.0, 1e-9);
}

TEST(LanguageModel, ErrorsOnBadInput) {
  const LmModel m(small_config(), 8);
  EXPECT_THROW(lm_logprob(m, std::vector<int>{}), InputError);
  EXPECT_THROW(lm_logprob(m, std::vector<int>{3, 8}), InputError);
  EXPECT_THROW(LmModel(LmConfig{8, 8, 3, 0.0}, 8), ConfigError);
}

TEST(LanguageModel, IncrementalConsistencyAndNormalization) {
  Rng rng(1);
  for (std::size_t layers : {1u, 2u}) {
    LmModel m(small_config(layers), 9);
    m.params().init_uniform(rng, 0.5);
    std::vector<int> y;
    for (int k = 0; k < 6; ++k) y.push_back(static_cast<int>(rng.between(3, 8)));
    y.push_back(Vocabulary::kEos);
    const auto prefix = lm_prefix_logprobs(m, y);
    LmState s = lm_start(m);
    double running = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      const Vec d = lm_next_log_dist(m, s);
      double total = 0.0;
      for (double v : d) total += std::exp(v);
      EXPECT_NEAR(total, 1.0, 1e-12);
      running += d[static_cast<std::size_t>(y[j])];
      EXPECT_EQ(running, prefix[j]);
      EXPECT_EQ(lm_logprob(m, std::span<const int>(y).first(j + 1)), prefix[j]);
      s = lm_advance(m, s, y[j]);
    }
  }
}

TEST(LanguageModel, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (std::size_t layers : {1u, 2u}) {
    LmModel m(LmConfig{3, 3, layers, 0.0}, 6);
    m.params().init_uniform(rng, 0.8);
    const std::vector<int> y{3, 5, 4, Vocabulary::kEos};
    GradientBuffer grads(m.params());
    const double loss = lm_example_gradient(m, y, grads);
    EXPECT_NEAR(loss, -lm_logprob(m, y), 1e-12);
    const auto report = check_gradients(m.params(), [&] { return -lm_logprob(m, y); }, grads);
    EXPECT_LT(report.worst, 1e-5) << report.worst_name;
  }
}

std::vector<std::vector<int>> random_corpus(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::vector<int>> corpus;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<int> y;
    const std::size_t len = rng.between(2, 6);
    for (std::size_t t = 0; t < len; ++t) y.push_back(static_cast<int>(rng.between(3, vocab - 1)));
    y.push_back(Vocabulary::kEos);
    corpus.push_back(y);
  }
  return corpus;
}

TEST(LanguageModel, SecondEpochImproves) {
  Rng rng(3);
  // Structured corpus: token t is followed by t + 1 (wrapping), so there is
  // something to learn.
  std::vector<std::vector<int>> corpus;
  for (int k = 0; k < 1000; ++k) {
    std::vector<int> y;
    int t = static_cast<int>(rng.between(3, 9));
    const std::size_t len = rng.between(2, 6);
    for (std::size_t s = 0; s < len; ++s) {
      y.push_back(t);
      t = t == 9 ? 3 : t + 1;
    }
    y.push_back(Vocabulary::kEos);
    corpus.push_back(y);
  }
  LmModel m(small_config(), 10);
  m.initialize(rng);
  TrainOptions opts;
  opts.adam.lr = 0.01;
  std::uint64_t step = 0;
  const double e1 = lm_train_epoch(m, corpus, opts, 0, step);
  const double e2 = lm_train_epoch(m, corpus, opts, 1, step);
  EXPECT_GE(e1, 0.0);
  EXPECT_GE(e2, 0.0);
  EXPECT_LT(e2, e1);
}

TEST(LanguageModel, LearnsBigram) {
  // Token 4 ("A") always follows token 3 ("B").
  Rng rng(4);
  std::vector<std::vector<int>> corpus;
  for (int k = 0; k < 300; ++k) {
    std::vector<int> y;
    const std::size_t len = rng.between(1, 4);
    for (std::size_t s = 0; s < len; ++s) {
      const int t = static_cast<int>(rng.between(3, 7));
      y.push_back(t);
      if (t == 3) y.push_back(4);
    }
    y.push_back(Vocabulary::kEos);
    corpus.push_back(y);
  }
  LmModel m(small_config(), 8);
  m.initialize(rng);
  TrainOptions opts;
  opts.adam.lr = 0.01;
  std::uint64_t step = 0;
  for (int e = 0; e < 15; ++e) lm_train_epoch(m, corpus, opts, e, step);
  for (int ctx : {5, 6, 7}) {
    const LmState s = lm_advance(m, lm_advance(m, lm_start(m), ctx), 3);
    EXPECT_GT(std::exp(lm_next_log_dist(m, s)[4]), 0.9) << "after " << ctx << " B";
  }
}

TEST(LanguageModel, RepeatedSentenceDrivesPerplexityToOne) {
  Rng rng(5);
  const std::vector<std::vector<int>> corpus(64, std::vector<int>{3, 5, 4, 6, Vocabulary::kEos});
  LmModel m(small_config(), 8);
  m.initialize(rng);
  TrainOptions opts;
  opts.adam.lr = 0.02;
  std::uint64_t step = 0;
  const double before = perplexity(m, corpus);
  for (int e = 0; e < 150; ++e) lm_train_epoch(m, corpus, opts, e, step);
  const double after = perplexity(m, corpus);
  EXPECT_GT(before, 5.0);
  EXPECT_LT(after, 1.05);
  EXPECT_GE(after, 1.0);
}

TEST(LanguageModel, UniformRandomCorpusPlateausNearVocabularySize) {
  Rng rng(6);
  // Tokens 3..9 uniformly, lengths 2..6 plus EOS: the ideal per-token
  // perplexity is a mix of 7 choices and the EOS decision.
  const auto corpus = random_corpus(rng, 600, 10);
  const auto held_out = random_corpus(rng, 200, 10);
  LmModel m(small_config(), 10);
  m.initialize(rng);
  TrainOptions opts;
  opts.adam.lr = 0.01;
  std::uint64_t step = 0;
  for (int e = 0; e < 5; ++e) lm_train_epoch(m, corpus, opts, e, step);
  const double ppl = perplexity(m, held_out);
  EXPECT_GT(ppl, 5.0);
  EXPECT_LT(ppl, 10.0);
}

}  // namespace
}  // namespace ssnt
