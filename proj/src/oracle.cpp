#include "ssnt/oracle.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ssnt/errors.hpp"

namespace ssnt {

namespace {

void check_size(std::size_t I, std::size_t J) {
  if (I > kOracleMaxLen || J > kOracleMaxLen) {
    throw BudgetError("enumeration oracle refuses I = " + std::to_string(I) +
                      ", J = " + std::to_string(J) + " (limit " +
                      std::to_string(kOracleMaxLen) + ")");
  }
}

// Calls visit(z) for every nondecreasing z in [0, I)^J with z[J-1] = I-1.
void for_each_alignment(std::size_t I, std::size_t J,
                        const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> z(J, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t j, std::size_t lo) {
    if (j + 1 == J) {
      z[j] = I - 1;
      visit(z);
      return;
    }
    for (std::size_t i = lo; i < I; ++i) {
      z[j] = i;
      rec(j + 1, i);
    }
  };
  if (J > 0) rec(0, 0);
}

// Probability of the jump prev -> i at output j (prev = 0 for the first
// output), given emit probabilities p[i][j].
double jump_prob(const std::vector<std::vector<double>>& p_emit, std::size_t prev,
                 std::size_t i, std::size_t j) {
  double prob = p_emit[i][j];
  for (std::size_t m = prev; m < i; ++m) prob *= 1.0 - p_emit[m][j];
  return prob;
}

double path_prob(const std::vector<std::vector<double>>& p_word,
                 const std::vector<std::vector<double>>& p_emit,
                 const std::vector<std::size_t>& z) {
  double prob = 1.0;
  std::size_t prev = 0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    prob *= jump_prob(p_emit, prev, z[j], j) * p_word[z[j]][j];
    prev = z[j];
  }
  return prob;
}

struct LinearCells {
  std::vector<std::vector<double>> word;
  std::vector<std::vector<double>> emit;
};

LinearCells cells_of(const Lattice& lat) {
  LinearCells c{std::vector<std::vector<double>>(lat.I, std::vector<double>(lat.J)),
                std::vector<std::vector<double>>(lat.I, std::vector<double>(lat.J))};
  for (std::size_t i = 0; i < lat.I; ++i) {
    for (std::size_t j = 0; j < lat.J; ++j) {
      c.word[i][j] = std::exp(lat.log_word(i, j));
      c.emit[i][j] = std::exp(lat.log_emit(i, j));
    }
  }
  return c;
}

}  // namespace

std::size_t count_alignments(std::size_t I, std::size_t J) {
  std::size_t n = 0;
  for_each_alignment(I, J, [&](const std::vector<std::size_t>&) { ++n; });
  return n;
}

double brute_force_marginal(const SsntModel& model, std::span<const int> x,
                            std::span<const int> y) {
  if (y.empty()) return 0.0;
  check_size(x.size(), y.size());
  const std::size_t I = x.size();
  const std::size_t J = y.size();
  const auto h = encode(model, x);
  const auto s = decoder_prefix_states(model, y);
  LinearCells c{std::vector<std::vector<double>>(I, std::vector<double>(J)),
                std::vector<std::vector<double>>(I, std::vector<double>(J))};
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      const Vec dist = word_log_dist(model, h[i], s[j].h);
      c.word[i][j] = std::exp(dist[static_cast<std::size_t>(y[j])]);
      c.emit[i][j] = std::exp(transition_probs(model, h[i], s[j].h).log_emit);
    }
  }
  double total = 0.0;
  for_each_alignment(I, J, [&](const std::vector<std::size_t>& z) {
    total += path_prob(c.word, c.emit, z);
  });
  return total;
}

double brute_force_marginal(const Lattice& lat) {
  if (lat.J == 0) return 0.0;
  check_size(lat.I, lat.J);
  const LinearCells c = cells_of(lat);
  double total = 0.0;
  for_each_alignment(lat.I, lat.J, [&](const std::vector<std::size_t>& z) {
    total += path_prob(c.word, c.emit, z);
  });
  return total;
}

Grid brute_force_gamma(const Lattice& lat) {
  check_size(lat.I, lat.J);
  const LinearCells c = cells_of(lat);
  Grid gamma(lat.I, lat.J, 0.0);
  double total = 0.0;
  for_each_alignment(lat.I, lat.J, [&](const std::vector<std::size_t>& z) {
    const double p = path_prob(c.word, c.emit, z);
    total += p;
    for (std::size_t j = 0; j < z.size(); ++j) gamma(z[j], j) += p;
  });
  for (std::size_t i = 0; i < lat.I; ++i) {
    for (std::size_t j = 0; j < lat.J; ++j) gamma(i, j) /= total;
  }
  return gamma;
}

}  // namespace ssnt

namespace ssnt {

namespace {

struct Search {
  StepScorer& scorer;
  std::size_t I;
  std::size_t V;
  std::size_t j_max;
  std::vector<int> tokens;
  std::vector<std::size_t> alignment;
  ExhaustiveBest best{kNegInf, {}, {}};
  bool found = false;

  void visit(StateId state, std::size_t prev, double score) {
    const std::size_t j = tokens.size();
    if (j == j_max) return;
    double shifted = 0.0;
    for (std::size_t i = (j == 0 ? 0 : prev); i < I; ++i) {
      const EmitShift es = scorer.transition(state, i);
      const double reach = score + shifted + es.log_emit;
      shifted += es.log_shift;
      const Vec word = scorer.word_log_dist(state, i);
      for (std::size_t t = 0; t < V; ++t) {
        const int tok = static_cast<int>(t);
        if (tok == Vocabulary::kBos) continue;
        const double s = reach + word[t];
        tokens.push_back(tok);
        alignment.push_back(i);
        if (tok == Vocabulary::kEos) {
          if (i + 1 == I && (!found || s > best.score)) {
            found = true;
            best = ExhaustiveBest{s, tokens, alignment};
          }
        } else {
          visit(scorer.advance(state, tok), i, s);
        }
        tokens.pop_back();
        alignment.pop_back();
      }
    }
  }
};

}  // namespace

ExhaustiveBest exhaustive_decode(StepScorer& scorer, std::size_t j_max) {
  const std::size_t I = scorer.input_length();
  const std::size_t V = scorer.vocab_size();
  double space = 1.0;
  for (std::size_t j = 0; j < j_max; ++j) space *= static_cast<double>(V * I);
  if (space > static_cast<double>(kOracleMaxSearch)) {
    throw BudgetError("exhaustive decode search space too large");
  }
  Search s{scorer, I, V, j_max, {}, {}};
  s.visit(scorer.start(), 0, 0.0);
  if (!s.found) throw InternalError("exhaustive decode found no complete output");
  return s.best;
}

}  // namespace ssnt
