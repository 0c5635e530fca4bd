#pragma once

#include <span>
#include <vector>

#include "ssnt/decoder.hpp"
#include "ssnt/lattice.hpp"
#include "ssnt/ssnt_model.hpp"

namespace ssnt {

// Largest I or J the enumeration oracles accept.
inline constexpr std::size_t kOracleMaxLen = 6;

// p(y | x) by explicit enumeration of every monotone alignment z with
// z_J = I, multiplying transition and word probabilities in linear space.
// Returns 0 for an empty output; BudgetError above kOracleMaxLen.
double brute_force_marginal(const SsntModel& model, std::span<const int> x,
                            std::span<const int> y);
double brute_force_marginal(const Lattice& lat);

// Alignment posteriors p(z_j = i | x, y) by enumeration.
Grid brute_force_gamma(const Lattice& lat);

// Number of alignments enumerated for an I x J lattice.
std::size_t count_alignments(std::size_t I, std::size_t J);

struct ExhaustiveBest {
  double score;
  std::vector<int> tokens;           // ends in EOS
  std::vector<std::size_t> alignment;  // ends at I - 1
};

// argmax over every output of length <= j_max that ends in EOS at the last
// input position (no earlier EOS, no BOS) and every monotone alignment of it.
// BudgetError when the search space exceeds kOracleMaxSearch.
inline constexpr std::size_t kOracleMaxSearch = 5'000'000;
ExhaustiveBest exhaustive_decode(StepScorer& scorer, std::size_t j_max);

}  // namespace ssnt
