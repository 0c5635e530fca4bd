#include "ssnt/math.hpp"

#include <algorithm>
#include <cmath>

namespace ssnt {

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double log_sigmoid(double v) {
  if (v >= 0.0) return -std::log1p(std::exp(-v));
  return v - std::log1p(std::exp(v));
}

double apply_activation(Activation kind, double v) {
  switch (kind) {
    case Activation::sigmoid:
      return sigmoid(v);
    case Activation::tanh:
      return std::tanh(v);
    case Activation::relu:
      return v > 0.0 ? v : 0.0;
  }
  return v;
}

Tensor activation(Activation kind, const Tensor& v) {
  Tensor out = v;
  for (double& x : out.data()) x = apply_activation(kind, x);
  return out;
}

Vec log_softmax(std::span<const double> v) {
  const double lse = log_sum_exp(v);
  Vec out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] - lse;
  return out;
}

Vec softmax(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double total = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out[k] = std::exp(v[k] - m);
    total += out[k];
  }
  for (double& p : out) p /= total;
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  const double m = *std::max_element(values.begin(), values.end());
  if (m == kNegInf) return kNegInf;
  double total = 0.0;
  for (double v : values) total += std::exp(v - m);
  return m + std::log(total);
}

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace ssnt
