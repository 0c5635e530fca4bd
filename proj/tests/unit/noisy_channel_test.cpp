#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ssnt/decoder.hpp"
#include "ssnt/errors.hpp"
#include "ssnt/lang_model.hpp"
#include "ssnt/lattice.hpp"
#include "ssnt/math.hpp"
#include "ssnt/noisy_channel.hpp"
#include "ssnt/vocab.hpp"
#include "test_util.hpp"

namespace ssnt {
namespace {

using testing::random_model;
using testing::random_sequence;
using testing::RandomScorer;

SsntConfig small_config(EncoderDirection dir = EncoderDirection::uni,
                        TransitionKind kind = TransitionKind::neural) {
  SsntConfig cfg;
  cfg.hidden_dim = 4;
  cfg.embed_dim = 3;
  cfg.encoder = dir;
  cfg.transition = kind;
  return cfg;
}

LmModel random_lm(Rng& rng, std::size_t vocab) {
  LmConfig cfg;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 4;
  LmModel lm(cfg, vocab);
  lm.params().init_uniform(rng, 0.8);
  return lm;
}

// ---- combination objective --------------------------------------------------------

TEST(Combination, DegenerateWeightsGiveDirectScore) {
  const CombinationWeights w{1.0, 0.0, 0.0, 0.0};
  EXPECT_EQ(combination_score(w, -3.25, -7.0, -2.0, 4), -3.25);
  // Zero-weighted infinite components do not poison the sum.
  EXPECT_EQ(combination_score(w, -3.25, kNegInf, kNegInf, 4), -3.25);
}

TEST(Combination, IsLinear) {
  const CombinationWeights w{0.5, 1.25, 0.75, -0.3};
  EXPECT_DOUBLE_EQ(combination_score(w, -2.0, -4.0, -8.0, 5),
                   0.5 * -2.0 + 1.25 * -4.0 + 0.75 * -8.0 - 0.3 * 5);
}

TEST(Combination, NegativeLengthWeightPenalisesLongerCandidates) {
  const CombinationWeights w{1.0, 1.0, 1.0, -0.5};
  double prev = combination_score(w, -1.0, -1.0, -1.0, 1);
  for (std::size_t len = 2; len < 20; ++len) {
    const double cur = combination_score(w, -1.0, -1.0, -1.0, len);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

// ---- incremental channel chart ----------------------------------------------------

TEST(ChannelColumn, IncrementalColumnsMatchFullForwardChart) {
  for (int n = 0; n < 40; ++n) {
    Rng rng(900 + n);
    const auto kind = n % 2 ? TransitionKind::neural : TransitionKind::geometric;
    // Channel: input y (vocab 7), output x (vocab 6).
    const SsntModel channel = random_model(rng, small_config(EncoderDirection::uni, kind), 7, 6);
    const auto x = random_sequence(rng, rng.between(1, 6), 6);
    const auto y = random_sequence(rng, rng.between(1, 6), 7);
    const Lattice lat = forward_chart(channel, y, x);
    const ChannelContext ctx(channel, x);
    ChannelColumn col = ctx.empty_column();
    for (std::size_t r = 0; r < y.size(); ++r) {
      col = extend_channel_column(ctx, col, r, y[r]);
      ASSERT_EQ(col.rows, r + 1);
      for (std::size_t c = 0; c < x.size(); ++c) {
        const double expect = lat.log_alpha(r, c);
        if (expect == kNegInf) continue;  // closed cells of the last column
        EXPECT_NEAR(col.alpha[c], expect, 1e-10) << n << " r=" << r << " c=" << c;
      }
    }
    EXPECT_NEAR(col.alpha[x.size() - 1], -nll_loss(channel, y, x), 1e-10);
  }
}

TEST(ChannelColumn, PrefixMassSumsRows) {
  Rng rng(31);
  const SsntModel channel = random_model(rng, small_config(), 7, 6);
  const auto x = random_sequence(rng, 4, 6);
  const auto y = random_sequence(rng, 5, 7);
  const ChannelContext ctx(channel, x);
  ChannelColumn col = ctx.empty_column();
  std::vector<Vec> rows;
  for (std::size_t r = 0; r < y.size(); ++r) {
    col = ctx.extend(col, y[r]);
    rows.push_back(col.alpha);
    for (std::size_t c = 0; c < x.size(); ++c) {
      Vec terms;
      for (const Vec& a : rows) terms.push_back(a[c]);
      EXPECT_NEAR(col.mass[c], log_sum_exp(terms), 1e-12);
      EXPECT_LE(col.mass[c], 1e-12);  // a probability
    }
  }
  // Longer x prefixes are never more probable.
  for (std::size_t c = 1; c < x.size(); ++c) EXPECT_LE(col.mass[c], col.mass[c - 1] + 1e-12);
}

TEST(ChannelColumn, StaleCacheIsAnInternalError) {
  Rng rng(2);
  const SsntModel channel = random_model(rng, small_config(), 7, 6);
  const auto x = random_sequence(rng, 3, 6);
  const ChannelContext ctx(channel, x);
  const ChannelColumn empty = ctx.empty_column();
  EXPECT_THROW(extend_channel_column(ctx, empty, 1, 3), InternalError);
  const ChannelColumn one = extend_channel_column(ctx, empty, 0, 3);
  EXPECT_THROW(extend_channel_column(ctx, one, 0, 4), InternalError);
  EXPECT_NO_THROW(extend_channel_column(ctx, one, 1, 4));
}

TEST(ChannelColumn, BidirectionalChannelIsRejected) {
  Rng rng(3);
  const SsntModel channel = random_model(rng, small_config(EncoderDirection::bi), 7, 6);
  const auto x = random_sequence(rng, 3, 6);
  EXPECT_THROW(ChannelContext(channel, x), ConfigError);
}

// ---- decoding ---------------------------------------------------------------------

TEST(NoisyChannel, DirectOnlyWeightsReproduceBeamSearch) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed, 123);
    const std::size_t I = rng.between(1, 5);
    const std::size_t V = rng.between(4, 7);
    const std::size_t K = rng.between(1, 6);
    const SsntModel channel = random_model(rng, small_config(), V, 6);
    const LmModel lm = random_lm(rng, V);
    const auto x = random_sequence(rng, I, 6);
    DecodeOptions beam;
    beam.beam = K;
    beam.j_max = rng.between(1, 9);
    RandomScorer s1(seed, I, V), s2(seed, I, V);
    const DecodeResult expect = beam_decode(s1, beam);
    NoisyChannelOptions o;
    o.k1 = K;
    o.k2 = K;
    o.j_max = beam.j_max;
    const ChannelContext ctx(channel, x);
    const NoisyChannelResult got =
        noisy_channel_decode(s2, ctx, lm, CombinationWeights{1, 0, 0, 0}, o);
    EXPECT_EQ(got.best.tokens, expect.tokens) << seed;
    EXPECT_EQ(got.best.alignment, expect.alignment) << seed;
    EXPECT_EQ(got.best.total, expect.score) << seed;
    EXPECT_EQ(got.best.complete, expect.complete) << seed;
  }
}

TEST(NoisyChannel, ComponentsMatchFromScratchScores) {
  int with_complete = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, 321);
    const std::size_t I = rng.between(1, 4);
    const std::size_t V = 6;
    const SsntModel direct = random_model(rng, small_config(EncoderDirection::bi), 6, V, 1.2);
    const SsntModel channel = random_model(rng, small_config(), V, 6, 1.2);
    const LmModel lm = random_lm(rng, V);
    const auto x = random_sequence(rng, I, 6);
    const CombinationWeights w{0.5, 1.0, 0.75, -0.25};
    NoisyChannelOptions o;
    o.k1 = 6;
    o.k2 = 3;
    o.nbest = 5;
    const NoisyChannelResult r = noisy_channel_decode(direct, channel, lm, x, w, o);
    {
      // The returned hypothesis, complete or not.
      const NoisyChannelCandidate& c = r.best;
      SsntStepScorer scorer(direct, x);
      EXPECT_NEAR(c.direct, joint_logprob(scorer, c.tokens, c.alignment), 1e-9);
      EXPECT_NEAR(c.lm, lm_prefix_logprobs(lm, c.tokens).back(), 1e-9);
      EXPECT_NEAR(c.total, combination_score(w, c.direct, c.channel, c.lm, c.tokens.size()),
                  1e-9);
    }
    if (r.nbest.empty()) continue;
    ++with_complete;
    EXPECT_EQ(r.nbest.front().tokens, r.best.tokens);
    for (std::size_t n = 0; n < r.nbest.size(); ++n) {
      const NoisyChannelCandidate& c = r.nbest[n];
      ASSERT_TRUE(c.complete);
      if (n > 0) EXPECT_LE(c.total, r.nbest[n - 1].total);
      SsntStepScorer scorer(direct, x);
      EXPECT_NEAR(c.direct, joint_logprob(scorer, c.tokens, c.alignment), 1e-9);
      EXPECT_NEAR(c.channel, -nll_loss(channel, c.tokens, x), 1e-9);
      EXPECT_NEAR(c.lm, lm_logprob(lm, c.tokens), 1e-9);
      EXPECT_NEAR(c.total, combination_score(w, c.direct, c.channel, c.lm, c.tokens.size()),
                  1e-9);
    }
  }
  EXPECT_GE(with_complete, 10);
}

TEST(NoisyChannel, ChannelAndLanguageModelChangeTheRanking) {
  // With a strong language model preference the decoder must follow it even
  // against a direct model that prefers another token.
  Rng rng(5);
  const SsntModel channel = random_model(rng, small_config(), 6, 6, 0.1);
  LmModel lm = random_lm(rng, 6);
  // Bias the language model output towards token 5.
  const ParamId b = lm.out_b();
  for (double& v : lm.params()[b].value.data()) v = 0.0;
  lm.params()[b].value.data()[5] = 12.0;
  lm.params()[b].value.data()[Vocabulary::kEos] = 6.0;
  const auto x = random_sequence(rng, 3, 6);
  NoisyChannelOptions o;
  o.k1 = 6;
  o.k2 = 6;
  o.j_max = 6;
  RandomScorer a(9, x.size(), 6), b2(9, x.size(), 6);
  const NoisyChannelResult direct_only =
      noisy_channel_decode(a, ChannelContext(channel, x), lm, CombinationWeights{1, 0, 0, 0}, o);
  const NoisyChannelResult lm_heavy =
      noisy_channel_decode(b2, ChannelContext(channel, x), lm, CombinationWeights{0, 0, 1, 0}, o);
  for (std::size_t j = 0; j + 1 < lm_heavy.best.tokens.size(); ++j) {
    EXPECT_EQ(lm_heavy.best.tokens[j], 5);
  }
  EXPECT_NE(direct_only.best.tokens, lm_heavy.best.tokens);
}

TEST(NoisyChannel, ValidatesModelsAndOptions) {
  Rng rng(8);
  const SsntModel direct = random_model(rng, small_config(), 6, 7);
  const SsntModel channel = random_model(rng, small_config(), 7, 6);
  const SsntModel wrong_channel = random_model(rng, small_config(), 8, 6);
  const SsntModel bi_channel = random_model(rng, small_config(EncoderDirection::bi), 7, 6);
  const LmModel lm = random_lm(rng, 7);
  const LmModel wrong_lm = random_lm(rng, 5);
  const auto x = random_sequence(rng, 3, 6);
  const CombinationWeights w{1, 1, 1, 0};
  NoisyChannelOptions o;
  EXPECT_NO_THROW(noisy_channel_decode(direct, channel, lm, x, w, o));
  EXPECT_THROW(noisy_channel_decode(direct, wrong_channel, lm, x, w, o), ConfigError);
  EXPECT_THROW(noisy_channel_decode(direct, channel, wrong_lm, x, w, o), ConfigError);
  EXPECT_THROW(noisy_channel_decode(direct, bi_channel, lm, x, w, o), ConfigError);
  o.k2 = 0;
  EXPECT_THROW(noisy_channel_decode(direct, channel, lm, x, w, o), ConfigError);
}

// ---- weight grid ------------------------------------------------------------------

TEST(WeightGrid, RemovesZeroAndProportionalDuplicates) {
  const auto values = default_weight_values();
  ASSERT_EQ(values.size(), 7u);
  EXPECT_EQ(values.back(), 1.5);
  const auto grid = weight_grid(values);
  auto normalized = [](const CombinationWeights& w) {
    const double m = std::max({w.direct, w.channel, w.lm, w.length});
    return std::array<double, 4>{w.direct / m, w.channel / m, w.lm / m, w.length / m};
  };
  for (std::size_t a = 0; a < grid.size(); ++a) {
    const auto na = normalized(grid[a]);
    for (std::size_t b = a + 1; b < grid.size(); ++b) {
      const auto nb = normalized(grid[b]);
      bool same = true;
      for (int k = 0; k < 4; ++k) same = same && std::abs(na[k] - nb[k]) < 1e-9;
      EXPECT_FALSE(same) << a << " " << b;
    }
  }
  // Every grid point is represented.
  std::size_t covered = 0;
  for (double a : values) {
    for (double b : values) {
      for (double c : values) {
        for (double d : values) {
          if (a == 0 && b == 0 && c == 0 && d == 0) continue;
          const auto n = normalized(CombinationWeights{a, b, c, d});
          for (const auto& g : grid) {
            const auto ng = normalized(g);
            bool same = true;
            for (int k = 0; k < 4; ++k) same = same && std::abs(n[k] - ng[k]) < 1e-9;
            if (same) {
              ++covered;
              break;
            }
          }
        }
      }
    }
  }
  EXPECT_EQ(covered, 7u * 7 * 7 * 7 - 1);
  EXPECT_LT(grid.size(), 2400u);
  EXPECT_EQ(grid.front(), (CombinationWeights{0, 0, 0, 0.25}));
}

TEST(WeightGrid, TuningKeepsFirstBest) {
  const std::vector<CombinationWeights> grid = {
      {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  const TuneResult r = tune_weights(grid, [](const CombinationWeights& w) {
    return w.channel + w.lm > 0 ? 0.8 : 0.5;
  });
  EXPECT_EQ(r.best, (CombinationWeights{0, 1, 0, 0}));
  EXPECT_EQ(r.best_accuracy, 0.8);
  EXPECT_EQ(r.evaluated.size(), 4u);
  EXPECT_THROW(tune_weights(std::vector<CombinationWeights>{}, [](const auto&) { return 0.0; }),
               ConfigError);
}

}  // namespace
}  // namespace ssnt
