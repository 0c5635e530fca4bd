#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "ssnt/errors.hpp"
#include "ssnt/gradcheck.hpp"
#include "ssnt/lstm.hpp"
#include "ssnt/math.hpp"
#include "ssnt/optim.hpp"
#include "ssnt/parameter.hpp"
#include "ssnt/rng.hpp"
#include "ssnt/tape.hpp"
#include "ssnt/tensor.hpp"

namespace ssnt {
namespace {

// ---- tensors -------------------------------------------------------------

TEST(Tensor, DataLengthIsShapeProduct) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 12u);
  EXPECT_THROW(Tensor({2, 0}), ConfigError);
}

TEST(Tensor, FromMatrixChecksLength) {
  EXPECT_THROW(Tensor::from_matrix(2, 2, {1, 2, 3}), ConfigError);
  const Tensor m = Tensor::from_matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(m.at(1, 0), 3.0);
}

// ---- activations, softmax, log-sum-exp ------------------------------------

TEST(Activation, SpecExamples) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(std::tanh(0.0), 0.0);
  EXPECT_EQ(apply_activation(Activation::relu, -2.0), 0.0);
  const Tensor t = activation(Activation::sigmoid, Tensor::from_vector({-50, 0, 50}));
  EXPECT_GT(t[0], 0.0);
  EXPECT_LT(t[2], 1.0 + 1e-15);
}

TEST(Activation, RangesOnRandomInputs) {
  Rng rng(11);
  for (int n = 0; n < 1000; ++n) {
    const double v = rng.uniform(-30.0, 30.0);
    const double s = sigmoid(v);
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_GE(std::tanh(v), -1.0);
    EXPECT_LE(std::tanh(v), 1.0);
    EXPECT_GE(apply_activation(Activation::relu, v), 0.0);
    EXPECT_NEAR(log_sigmoid(v), std::log(sigmoid(v)), 1e-12);
  }
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-9);
  EXPECT_NEAR(log_sigmoid(800.0), 0.0, 1e-300);
}

TEST(Softmax, SpecExamples) {
  const Vec u = softmax(Vec{0.0, 0.0});
  EXPECT_DOUBLE_EQ(u[0], 0.5);
  EXPECT_DOUBLE_EQ(u[1], 0.5);
  const Vec p = softmax(Vec{std::log(1.0), std::log(3.0)});
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, NormalizedAndShiftInvariant) {
  Rng rng(5);
  for (int n = 0; n < 200; ++n) {
    Vec v(1 + rng.below(12));
    for (double& x : v) x = rng.uniform(-20.0, 20.0);
    const Vec p = softmax(v);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double x : p) EXPECT_GT(x, 0.0);
    Vec shifted = v;
    for (double& x : shifted) x += 17.3;
    const Vec q = softmax(shifted);
    // The shift itself rounds v to the ulp of |v| + 17.3 (about 7e-15 here).
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k], q[k], 1e-14);
  }
}

TEST(LogSumExp, SpecExamples) {
  EXPECT_EQ(log_sum_exp(Vec{kNegInf, 0.0}), 0.0);
  EXPECT_NEAR(log_sum_exp(Vec{-3.5, -3.5}), -3.5 + std::log(2.0), 1e-15);
  EXPECT_NEAR(log_sum_exp(Vec{0.0, std::log(3.0)}), std::log(4.0), 1e-15);
  EXPECT_EQ(log_sum_exp(Vec{kNegInf, kNegInf}), kNegInf);
  EXPECT_EQ(log_sum_exp(Vec{}), kNegInf);
}

TEST(LogSumExp, BoundedByMaxAndMaxPlusLogLength) {
  Rng rng(6);
  for (int n = 0; n < 500; ++n) {
    Vec v(1 + rng.below(20));
    for (double& x : v) x = rng.bernoulli(0.1) ? kNegInf : rng.uniform(-900.0, 900.0);
    v[0] = rng.uniform(-900.0, 900.0);
    const double m = *std::max_element(v.begin(), v.end());
    const double l = log_sum_exp(v);
    EXPECT_GE(l, m);
    EXPECT_LE(l, m + std::log(static_cast<double>(v.size())) + 1e-12);
  }
}

// ---- tape gradients -------------------------------------------------------

// Records f(params) on a tape, seeds the output with random weights c and
// compares the analytic gradient of c . f against central differences.
double op_gradient_error(ParameterSet& params,
                         const std::function<Var(Tape&)>& record, Rng& rng) {
  Tape probe(params);
  const std::size_t out_size = probe.value(record(probe)).size();
  Vec c(out_size);
  for (double& v : c) v = rng.uniform(-1.0, 1.0);
  auto loss = [&]() {
    Tape t(params);
    const Vec& out = t.value(record(t));
    double s = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) s += c[k] * out[k];
    return s;
  };
  Tape tape(params);
  const Var out = record(tape);
  GradientBuffer grads(params);
  const Seed seeds[1] = {Seed{out, c}};
  tape.backward(seeds, grads);
  return check_gradients(params, loss, grads).worst;
}

class OpGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradient, MatchesFiniteDifferencesOnRandomInstances) {
  const std::string op = GetParam();
  Rng rng(1000 + std::hash<std::string>{}(op) % 1000);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t m = 1 + rng.below(4);
    ParameterSet params;
    const ParamId a = params.add("a", {1, n});
    const ParamId b = params.add("b", {1, n});
    const ParamId w = params.add("w", {m, n + 2});
    const ParamId table = params.add("table", {3, n});
    params.init_uniform(rng, 2.0);
    // Keep relu inputs away from its kink.
    for (double& v : params[a].value.data()) {
      if (std::abs(v) < 0.05) v = 0.5;
    }
    const std::size_t off = rng.below(3);
    const std::size_t pick = rng.below(n);
    Vec factors(n);
    for (double& f : factors) f = rng.uniform(-2.0, 2.0);
    const auto vec = [](Tape& t, ParamId id) { return t.lookup(id, 0); };
    const std::function<Var(Tape&)> record = [&](Tape& t) -> Var {
      const Var va = vec(t, a);
      const Var vb = vec(t, b);
      if (op == "linear") return t.linear(w, va, off);
      if (op == "add_bias") return t.add_bias(va, b);
      if (op == "add") return t.add(va, vb);
      if (op == "mul") return t.mul(va, vb);
      if (op == "scale") return t.scale(va, factors);
      if (op == "negate") return t.negate(va);
      if (op == "sigmoid") return t.activate(Activation::sigmoid, va);
      if (op == "tanh") return t.activate(Activation::tanh, va);
      if (op == "relu") return t.activate(Activation::relu, va);
      if (op == "log_sigmoid") return t.log_sigmoid(va);
      if (op == "concat") return t.concat(va, t.mul(vb, vb));
      if (op == "log_softmax_pick") return t.log_softmax_pick(t.mul(va, vb), pick);
      if (op == "lookup") return t.mul(t.lookup(table, pick % 3), va);
      ADD_FAILURE() << "unknown op " << op;
      return va;
    };
    worst = std::max(worst, op_gradient_error(params, record, rng));
  }
  EXPECT_LT(worst, 1e-5) << op;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Values("linear", "add_bias", "add", "mul", "scale",
                                           "negate", "sigmoid", "tanh", "relu",
                                           "log_sigmoid", "concat", "log_softmax_pick",
                                           "lookup"));

TEST(Tape, SigmoidDerivativeAtZero) {
  ParameterSet params;
  const ParamId w = params.add("w", {1, 1});
  Tape tape(params);
  const Var x = tape.constant({1.0});
  const Var f = tape.activate(Activation::sigmoid, tape.linear(w, x));
  GradientBuffer grads(params);
  const std::pair<Var, double> seeds[1] = {{f, 1.0}};
  tape.backward_scalars(seeds, grads);
  EXPECT_DOUBLE_EQ(grads[w][0], 0.25);
}

TEST(Tape, BackwardTwiceIsUsageError) {
  ParameterSet params;
  const ParamId w = params.add("w", {1, 1});
  Tape tape(params);
  const Var f = tape.linear(w, tape.constant({1.0}));
  GradientBuffer grads(params);
  const std::pair<Var, double> seeds[1] = {{f, 1.0}};
  tape.backward_scalars(seeds, grads);
  EXPECT_THROW(tape.backward_scalars(seeds, grads), UsageError);
  tape.reset();
  const Var g = tape.linear(w, tape.constant({1.0}));
  const std::pair<Var, double> again[1] = {{g, 1.0}};
  EXPECT_NO_THROW(tape.backward_scalars(again, grads));
}

TEST(Tape, UnusedParameterGetsExactlyZeroGradient) {
  ParameterSet params;
  const ParamId w = params.add("w", {2, 2});
  const ParamId unused = params.add("unused", {3});
  Rng rng(3);
  params.init_uniform(rng, 1.0);
  Tape tape(params);
  const Var f = tape.log_softmax_pick(tape.linear(w, tape.constant({0.3, -0.2})), 1);
  GradientBuffer grads(params);
  const std::pair<Var, double> seeds[1] = {{f, 1.0}};
  tape.backward_scalars(seeds, grads);
  for (double g : grads[unused].values()) EXPECT_EQ(g, 0.0);
}

// ---- LSTM ------------------------------------------------------------------

struct TinyLstm {
  ParameterSet params;
  LstmParams lstm;
  TinyLstm(std::size_t in, std::size_t h) { lstm = add_lstm_params(params, "lstm", in, h); }
};

// Independent scalar-by-scalar evaluation of the six LSTM equations.
LstmState scalar_lstm(const ParameterSet& p, const LstmParams& l, const Vec& x,
                      const LstmState& prev) {
  const std::size_t H = l.hidden_dim;
  auto pre = [&](const LstmParams::Gate& g, std::size_t r) {
    double z = p[g.b].value[r];
    for (std::size_t c = 0; c < x.size(); ++c) z += p[g.wx].value.at(r, c) * x[c];
    for (std::size_t c = 0; c < H; ++c) z += p[g.wh].value.at(r, c) * prev.h[c];
    return z;
  };
  LstmState out = LstmState::zeros(H);
  for (std::size_t r = 0; r < H; ++r) {
    const double g = std::tanh(pre(l.g, r));
    const double i = 1.0 / (1.0 + std::exp(-pre(l.i, r)));
    const double f = 1.0 / (1.0 + std::exp(-pre(l.f, r)));
    const double o = 1.0 / (1.0 + std::exp(-pre(l.o, r)));
    out.c[r] = g * i + prev.c[r] * f;
    out.h[r] = std::tanh(out.c[r]) * o;
  }
  return out;
}

TEST(Lstm, ZeroParametersGiveZeroState) {
  TinyLstm net(2, 3);
  const LstmState s = lstm_step(net.params, net.lstm, Vec{0.7, -1.2}, LstmState::zeros(3));
  for (double v : s.h) EXPECT_EQ(v, 0.0);
  for (double v : s.c) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SaturatedForgetGateKeepsCell) {
  TinyLstm net(1, 1);
  init_lstm_biases(net.params, net.lstm, 10.0);
  const LstmState s = lstm_step(net.params, net.lstm, Vec{0.4}, LstmState{{0.0}, {1.0}});
  EXPECT_NEAR(s.c[0], sigmoid(10.0), 1e-15);
  EXPECT_NEAR(s.c[0], 0.99995, 1e-5);
}

TEST(Lstm, MatchesScalarReimplementation) {
  Rng rng(21);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    TinyLstm net(2, 3);
    net.params.init_uniform(rng, 1.0);
    LstmState a = LstmState::zeros(3);
    LstmState b = a;
    for (int t = 0; t < 4; ++t) {
      const Vec x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      a = lstm_step(net.params, net.lstm, x, a);
      b = scalar_lstm(net.params, net.lstm, x, b);
      for (std::size_t k = 0; k < 3; ++k) {
        worst = std::max({worst, std::abs(a.h[k] - b.h[k]), std::abs(a.c[k] - b.c[k])});
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Lstm, DeterministicBitwise) {
  Rng rng(8);
  TinyLstm net(3, 4);
  net.params.init_uniform(rng, 0.5);
  const Vec x{0.1, 0.2, -0.3};
  const LstmState prev{{0.1, 0.0, -0.2, 0.3}, {0.5, -0.5, 0.0, 1.0}};
  EXPECT_EQ(lstm_step(net.params, net.lstm, x, prev), lstm_step(net.params, net.lstm, x, prev));
}

TEST(Lstm, TapeAgreesWithPlainStepBitwise) {
  Rng rng(9);
  TinyLstm net(2, 3);
  net.params.init_uniform(rng, 0.5);
  const Vec x{0.4, -0.9};
  const LstmState prev{{0.1, 0.2, 0.3}, {-0.1, 0.0, 0.7}};
  Tape tape(net.params);
  const LstmVars v = lstm_step(tape, net.lstm, tape.constant(x),
                               LstmVars{tape.constant(prev.h), tape.constant(prev.c)});
  const LstmState plain = lstm_step(net.params, net.lstm, x, prev);
  EXPECT_EQ(tape.value(v.h), plain.h);
  EXPECT_EQ(tape.value(v.c), plain.c);
}

TEST(Lstm, DimensionMismatchIsConfigError) {
  TinyLstm net(2, 3);
  EXPECT_THROW(lstm_step(net.params, net.lstm, Vec{1.0}, LstmState::zeros(3)), ConfigError);
  EXPECT_THROW(lstm_step(net.params, net.lstm, Vec{1.0, 2.0}, LstmState::zeros(2)),
               ConfigError);
}

TEST(Lstm, TwoStepGradientMatchesFiniteDifferences) {
  Rng rng(31);
  TinyLstm net(1, 2);
  const ParamId readout = net.params.add("readout", {1, 2});
  net.params.init_uniform(rng, 1.0);
  const Vec xs[2] = {{0.7}, {-0.4}};
  auto record = [&](Tape& t) {
    LstmVars s{t.constant({0.0, 0.0}), t.constant({0.0, 0.0})};
    for (const Vec& x : xs) s = lstm_step(t, net.lstm, t.constant(x), s);
    return t.linear(readout, s.h);
  };
  auto loss = [&]() {
    Tape t(net.params);
    return t.scalar(record(t));
  };
  Tape tape(net.params);
  const Var out = record(tape);
  GradientBuffer grads(net.params);
  const std::pair<Var, double> seeds[1] = {{out, 1.0}};
  tape.backward_scalars(seeds, grads);
  const GradCheckReport report = check_gradients(net.params, loss, grads);
  EXPECT_LT(report.worst, 1e-6) << report.worst_name;
}

TEST(Lstm, MultiStepGradientOnRandomInstances) {
  Rng rng(32);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t in = 1 + rng.below(3);
    const std::size_t h = 1 + rng.below(3);
    TinyLstm net(in, h);
    const ParamId readout = net.params.add("readout", {3, h});
    net.params.init_uniform(rng, 1.0);
    const std::size_t steps = 1 + rng.below(4);
    std::vector<Vec> xs(steps, Vec(in));
    for (auto& x : xs) {
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
    }
    const std::size_t pick = rng.below(3);
    auto record = [&](Tape& t) {
      LstmVars s{t.constant(Vec(h, 0.0)), t.constant(Vec(h, 0.0))};
      for (const Vec& x : xs) s = lstm_step(t, net.lstm, t.constant(x), s);
      return t.log_softmax_pick(t.linear(readout, s.h), pick);
    };
    auto loss = [&]() {
      Tape t(net.params);
      return t.scalar(record(t));
    };
    Tape tape(net.params);
    const Var out = record(tape);
    GradientBuffer grads(net.params);
    const std::pair<Var, double> seeds[1] = {{out, 1.0}};
    tape.backward_scalars(seeds, grads);
    worst = std::max(worst, check_gradients(net.params, loss, grads).worst);
  }
  EXPECT_LT(worst, 1e-5);
}

// ---- optimizer -------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet params;
  const ParamId w = params.add("w", {3});
  Rng rng(1);
  params.init_uniform(rng, 1.0);
  const Tensor before = params[w].value;
  adam_step(params, AdamConfig{}, 1);
  EXPECT_EQ(params[w].value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet params;
  const ParamId w = params.add("w", {1});
  params[w].grad[0] = 1.0;
  adam_step(params, AdamConfig{}, 1);
  EXPECT_NEAR(params[w].value[0], -0.001, 1e-10);
  EXPECT_EQ(params[w].grad[0], 0.0);
}

TEST(Adam, QuadraticLossDecreasesMonotonically) {
  ParameterSet params;
  const ParamId w = params.add("w", {1});
  AdamConfig cfg;
  cfg.lr = 0.1;
  double prev = 0.5 * 9.0;
  for (std::uint64_t step = 1; step <= 10; ++step) {
    params[w].grad[0] = params[w].value[0] - 3.0;
    adam_step(params, cfg, step);
    const double d = params[w].value[0] - 3.0;
    const double loss = 0.5 * d * d;
    EXPECT_LT(loss, prev) << "step " << step;
    prev = loss;
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParameterSet params;
  params.add("ok", {1});
  const ParamId bad = params.add("decoder.W_gx", {2});
  params[bad].grad[1] = std::nan("");
  try {
    adam_step(params, AdamConfig{}, 1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.W_gx"), std::string::npos);
  }
}

TEST(Adam, FrozenParameterIsNotUpdated) {
  ParameterSet params;
  const ParamId e = params.add("e", {1}, /*trainable=*/false);
  params[e].value[0] = 0.5;
  params[e].grad[0] = 1.0;
  adam_step(params, AdamConfig{}, 1);
  EXPECT_EQ(params[e].value[0], 0.5);
}

TEST(Clip, SpecExamples) {
  ParameterSet params;
  const ParamId w = params.add("w", {2});
  params[w].grad[0] = 2.0;
  EXPECT_EQ(clip_gradients(params), 1.0);
  EXPECT_EQ(params[w].grad[0], 2.0);
  params[w].grad[0] = 6.0;
  params[w].grad[1] = 8.0;
  EXPECT_DOUBLE_EQ(clip_gradients(params, 5.0), 0.5);
  EXPECT_NEAR(global_grad_norm(params), 5.0, 1e-12);
}

TEST(Dropout, SpecExamples) {
  Rng rng(4);
  for (double v : dropout_mask(10, 0.0, rng, true)) EXPECT_EQ(v, 1.0);
  for (double v : dropout_mask(10, 0.5, rng, false)) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(dropout_mask(3, 1.0, rng, true), ConfigError);
  EXPECT_THROW(dropout_mask(3, -0.1, rng, true), ConfigError);
}

TEST(Dropout, DeterministicGivenSeed) {
  Rng a(77), b(77);
  EXPECT_EQ(dropout_mask(64, 0.3, a, true), dropout_mask(64, 0.3, b, true));
}

TEST(Dropout, MeanMaskValueIsOne) {
  Rng rng(12);
  const double rate = 0.2;
  const std::size_t n = 1000000;
  const Vec mask = dropout_mask(n, rate, rng, true);
  const double mean = std::accumulate(mask.begin(), mask.end(), 0.0) / n;
  // Each entry has variance rate / (1 - rate).
  const double sigma = std::sqrt(rate / (1.0 - rate) / n);
  EXPECT_NEAR(mean, 1.0, 3.0 * sigma);
  for (double v : mask) EXPECT_TRUE(v == 0.0 || v == 1.0 / (1.0 - rate));
}

// ---- rng, parameters, gradient buffers ------------------------------------

TEST(Rng, ReproducibleAndStreamsDiffer) {
  Rng a(5), b(5), c(5, 1);
  for (int k = 0; k < 100; ++k) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
  Rng d(5);
  d.next_u64();
  EXPECT_EQ(Rng(5).split(3).next_u64(), d.split(3).next_u64());
}

TEST(Rng, BelowIsInRange) {
  Rng rng(2);
  for (int k = 0; k < 10000; ++k) EXPECT_LT(rng.below(7), 7u);
  for (int k = 0; k < 1000; ++k) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Parameters, DuplicateNamesRejectedAndFindWorks) {
  ParameterSet params;
  const ParamId a = params.add("a", {2, 2});
  EXPECT_THROW(params.add("a", {1}), ConfigError);
  EXPECT_EQ(params.find("a"), a);
  EXPECT_THROW(params.find("missing"), ConfigError);
  EXPECT_TRUE(params[a].grad.same_shape(params[a].value));
  EXPECT_TRUE(params[a].adam_m.same_shape(params[a].value));
}

TEST(Parameters, GradientReductionIsAdditive) {
  ParameterSet params;
  const ParamId w = params.add("w", {2});
  GradientBuffer g1(params), g2(params);
  g1[w][0] = 1.5;
  g2[w][0] = 2.0;
  g2[w][1] = -1.0;
  g1.add(g2);
  g1.accumulate_into(params);
  EXPECT_EQ(params[w].grad[0], 3.5);
  EXPECT_EQ(params[w].grad[1], -1.0);
  params.zero_grad();
  EXPECT_EQ(params[w].grad[0], 0.0);
}

TEST(GradCheck, RelativeErrorUsesFloor) {
  EXPECT_NEAR(relative_error(1.0, 1.1, 1e-4), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9, 1e-4), 1e-5);
}

}  // namespace
}  // namespace ssnt
