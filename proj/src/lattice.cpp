#include "ssnt/lattice.hpp"

#include <cmath>
#include <string>

#include "ssnt/errors.hpp"

namespace ssnt {

Lattice Lattice::from_scores(Grid log_word, Grid log_emit, Grid log_shift) {
  if (log_word.rows() == 0 || log_word.cols() == 0) {
    throw InputError("lattice needs at least one input and one output position");
  }
  if (log_emit.rows() != log_word.rows() || log_emit.cols() != log_word.cols() ||
      log_shift.rows() != log_word.rows() || log_shift.cols() != log_word.cols()) {
    throw ConfigError("lattice score grids differ in shape");
  }
  Lattice lat;
  lat.I = log_word.rows();
  lat.J = log_word.cols();
  lat.log_word = std::move(log_word);
  lat.log_emit = std::move(log_emit);
  lat.log_shift = std::move(log_shift);
  return lat;
}

double Lattice::log_marginal() const {
  if (!has_alpha) throw UsageError("forward chart not filled");
  return log_alpha(I - 1, J - 1);
}

double transition_logprob(const Lattice& lat, std::size_t k, std::size_t i,
                          std::size_t j) {
  if (i >= lat.I || k >= lat.I || j >= lat.J) {
    throw UsageError("transition_logprob: index out of range");
  }
  if (j == 0 && k != 0) {
    throw UsageError("transition_logprob: the first alignment starts at input 0");
  }
  if (i < k) return kNegInf;
  double lp = lat.log_emit(i, j);
  for (std::size_t m = k; m < i; ++m) lp += lat.log_shift(m, j);
  return lp;
}

Lattice score_lattice(const SsntModel& model, std::span<const int> x,
                      std::span<const int> y) {
  if (x.empty() || y.empty()) throw InputError("score_lattice: empty sequence");
  const std::size_t I = x.size();
  const std::size_t J = y.size();
  if (I * J > model.config().max_cells) {
    throw BudgetError("pair with I*J = " + std::to_string(I * J) +
                      " exceeds the lattice budget of " +
                      std::to_string(model.config().max_cells));
  }
  const auto enc = encode(model, x);
  const auto dec = decoder_prefix_states(model, y);
  std::vector<SourceProjection> src;
  src.reserve(I);
  for (const auto& h : enc) src.push_back(project_source(model, h));

  Grid word(I, J), emit(I, J), shift(I, J);
  for (std::size_t j = 0; j < J; ++j) {
    const TargetProjection tgt = project_target(model, dec[j].h);
    for (std::size_t i = 0; i < I; ++i) {
      word(i, j) = word_log_dist(src[i], tgt)[static_cast<std::size_t>(y[j])];
      const EmitShift es = transition_probs(model, src[i], tgt);
      emit(i, j) = es.log_emit;
      shift(i, j) = es.log_shift;
    }
  }
  return Lattice::from_scores(std::move(word), std::move(emit), std::move(shift));
}

void fill_forward(Lattice& lat) {
  const std::size_t I = lat.I;
  const std::size_t J = lat.J;
  lat.log_alpha = Grid(I, J);
  // acc(i) = log sum_{k<=i} alpha(k, j-1) * prod_{m=k}^{i-1} shift(m, j); for
  // the first column the path enters at input 0 with mass 1.
  for (std::size_t j = 0; j < J; ++j) {
    double acc = kNegInf;
    for (std::size_t i = 0; i < I; ++i) {
      const double entering = j == 0 ? (i == 0 ? 0.0 : kNegInf) : lat.log_alpha(i, j - 1);
      acc = i == 0 ? entering : log_add(acc + lat.log_shift(i - 1, j), entering);
      if (cell_open(lat, i, j)) {
        lat.log_alpha(i, j) = lat.log_word(i, j) + lat.log_emit(i, j) + acc;
      }
    }
  }
  lat.has_alpha = true;
}

void fill_backward(Lattice& lat) {
  const std::size_t I = lat.I;
  const std::size_t J = lat.J;
  lat.log_beta = Grid(I, J);
  for (std::size_t i = 0; i < I; ++i) lat.log_beta(i, J - 1) = 0.0;
  for (std::size_t j = J - 1; j-- > 0;) {
    const std::size_t next = j + 1;
    double acc = kNegInf;
    for (std::size_t i = I; i-- > 0;) {
      const double here = cell_open(lat, i, next)
                              ? lat.log_emit(i, next) + lat.log_word(i, next) +
                                    lat.log_beta(i, next)
                              : kNegInf;
      acc = i + 1 == I ? here : log_add(here, lat.log_shift(i, next) + acc);
      lat.log_beta(i, j) = acc;
    }
  }
  lat.has_beta = true;
}

Lattice forward_chart(const SsntModel& model, std::span<const int> x,
                      std::span<const int> y) {
  Lattice lat = score_lattice(model, x, y);
  fill_forward(lat);
  return lat;
}

void backward_chart(Lattice& lat) {
  if (!lat.has_alpha) throw UsageError("backward_chart: run the forward chart first");
  fill_backward(lat);
}

double nll_loss(const SsntModel& model, std::span<const int> x,
                std::span<const int> y) {
  if (y.empty()) throw InputError("nll_loss: empty output has zero probability");
  const Lattice lat = forward_chart(model, x, y);
  const double lp = lat.log_marginal();
  if (lp == kNegInf) throw InputError("nll_loss: pair has zero marginal probability");
  return -lp;
}

Posteriors posteriors(const Lattice& lat) {
  if (!lat.has_alpha || !lat.has_beta) {
    throw UsageError("posteriors: both charts must be filled");
  }
  const std::size_t I = lat.I;
  const std::size_t J = lat.J;
  const double log_z = lat.log_marginal();
  if (log_z == kNegInf) throw InputError("posteriors: zero marginal probability");

  Posteriors post;
  post.I = I;
  post.J = J;
  post.gamma = Grid(I, J, 0.0);
  post.xi.assign(J, Vec(I * (I + 1) / 2, 0.0));
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t i = 0; i < I; ++i) {
      post.gamma(i, j) = std::exp(lat.log_alpha(i, j) + lat.log_beta(i, j) - log_z);
    }
  }
  for (std::size_t i = 0; i < I; ++i) post.xi[0][i * (i + 1) / 2] = post.gamma(i, 0);
  for (std::size_t j = 1; j < J; ++j) {
    for (std::size_t i = 0; i < I; ++i) {
      if (!cell_open(lat, i, j)) continue;
      const double tail = lat.log_word(i, j) + lat.log_beta(i, j) - log_z;
      // Walk k downwards so the shift product grows incrementally.
      double path = lat.log_emit(i, j);
      for (std::size_t k = i + 1; k-- > 0;) {
        if (k < i) path += lat.log_shift(k, j);
        post.xi[j][i * (i + 1) / 2 + k] = std::exp(lat.log_alpha(k, j - 1) + path + tail);
      }
    }
  }
  return post;
}

CellWeights loss_cell_weights(const Posteriors& post) {
  const std::size_t I = post.I;
  const std::size_t J = post.J;
  CellWeights w{Grid(I, J, 0.0), Grid(I, J, 0.0), Grid(I, J, 0.0)};
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t i = 0; i < I; ++i) {
      w.word(i, j) = -post.gamma(i, j);
      double into = 0.0;
      for (std::size_t k = 0; k <= i; ++k) into += post.xi_at(k, i, j);
      w.emit(i, j) = -into;
    }
    // A transition k -> i passes through shift(m) for k <= m < i.
    for (std::size_t i = 1; i < I; ++i) {
      double from_at_most_m = 0.0;
      for (std::size_t m = 0; m < i; ++m) {
        from_at_most_m += post.xi_at(m, i, j);
        w.shift(m, j) -= from_at_most_m;
      }
    }
  }
  return w;
}

}  // namespace ssnt
