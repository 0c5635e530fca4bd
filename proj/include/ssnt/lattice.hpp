#pragma once

#include <span>
#include <vector>

#include "ssnt/math.hpp"
#include "ssnt/ssnt_model.hpp"

namespace ssnt {

// Row-major I x J table of log-domain values, -inf by default.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, double fill = kNegInf)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const Vec& values() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

// Per-pair charts. Indices are 0-based: input position i in [0, I), output
// position j in [0, J). Both lengths count the terminal EOS.
struct Lattice {
  std::size_t I = 0;
  std::size_t J = 0;
  Grid log_word;   // log p(y_j | x_1^i, y_1^{j-1})
  Grid log_emit;   // log p(emit at input i | y_1^{j-1})
  Grid log_shift;  // log p(shift at input i | y_1^{j-1})
  Grid log_alpha;
  Grid log_beta;
  bool has_alpha = false;
  bool has_beta = false;

  // Builds a lattice from raw cell scores (stub models, tests).
  static Lattice from_scores(Grid log_word, Grid log_emit, Grid log_shift);

  // log p(y | x) = log alpha(I, J).
  double log_marginal() const;
};

// False for the cells excluded by the end-of-input constraint: the last output
// position can only be aligned to the last input position.
inline bool cell_open(const Lattice& lat, std::size_t i, std::size_t j) {
  return j + 1 < lat.J || i + 1 == lat.I;
}

// log p(z_j = i | z_{j-1} = k). For j = 0 the alignment starts at the first
// input position and k must be 0. -inf when i < k.
double transition_logprob(const Lattice& lat, std::size_t k, std::size_t i,
                          std::size_t j);

// Word, emit and shift scores of the pair under `model` (no charts yet).
// BudgetError when I*J exceeds the model's max_cells.
Lattice score_lattice(const SsntModel& model, std::span<const int> x,
                      std::span<const int> y);

void fill_forward(Lattice& lat);
void fill_backward(Lattice& lat);

Lattice forward_chart(const SsntModel& model, std::span<const int> x,
                      std::span<const int> y);
void backward_chart(Lattice& lat);

// -log p(y | x). InputError when the marginal is zero.
double nll_loss(const SsntModel& model, std::span<const int> x,
                std::span<const int> y);

// Alignment posteriors. xi for output position j is stored as a lower
// triangle over (k <= i); for j = 0 only k = 0 is populated.
struct Posteriors {
  std::size_t I = 0;
  std::size_t J = 0;
  Grid gamma;                 // p(z_j = i | x, y), linear domain
  std::vector<Vec> xi;        // per j, index i*(i+1)/2 + k, linear domain

  double xi_at(std::size_t k, std::size_t i, std::size_t j) const {
    return xi[j][i * (i + 1) / 2 + k];
  }
};

Posteriors posteriors(const Lattice& lat);

// Derivatives of -log p(y | x) with respect to every cell score, i.e. the
// posterior-weighted constants that multiply the per-cell log-probability
// gradients:
//   word(i,j)  <- -gamma(i,j)
//   emit(i,j)  <- -sum_k xi(k,i,j)
//   shift(m,j) <- -sum_{i>m} sum_{k<=m} xi(k,i,j)
struct CellWeights {
  Grid word;
  Grid emit;
  Grid shift;
};

CellWeights loss_cell_weights(const Posteriors& post);

}  // namespace ssnt
