#include "ssnt/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "ssnt/errors.hpp"

namespace ssnt {

namespace {

std::size_t extent_product(const std::vector<std::size_t>& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ConfigError("tensor extents must be positive");
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(extent_product(shape_), fill) {}

Tensor Tensor::from_vector(Vec values) {
  Tensor t;
  if (values.empty()) throw ConfigError("tensor extents must be positive");
  t.shape_ = {values.size()};
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols, Vec values) {
  Tensor t({rows, cols});
  if (values.size() != t.size()) {
    throw ConfigError("matrix data length does not match its shape");
  }
  t.data_ = std::move(values);
  return t;
}

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return 1;
  return data_.size() / shape_[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

}  // namespace ssnt
