#pragma once

#include <limits>
#include <span>

#include "ssnt/tensor.hpp"

namespace ssnt {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class Activation { sigmoid, tanh, relu };

double sigmoid(double v);
// log sigma(v), accurate for large |v|.
double log_sigmoid(double v);

double apply_activation(Activation kind, double v);
Tensor activation(Activation kind, const Tensor& v);

Vec softmax(std::span<const double> v);
Vec log_softmax(std::span<const double> v);

// log(sum(exp(values))), max-shifted. Returns -inf iff every entry is -inf
// (or the span is empty).
double log_sum_exp(std::span<const double> values);
double log_add(double a, double b);

// sum_k a[k] * b[k] with four interleaved partial sums, combined as
// (s0 + s1) + (s2 + s3) plus the tail. Every matrix-vector product goes
// through this kernel, so recomputations agree bitwise.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; k < n; ++k) s += a[k] * b[k];
  return s;
}

}  // namespace ssnt
