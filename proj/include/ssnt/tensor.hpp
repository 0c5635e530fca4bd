#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ssnt {

using Vec = std::vector<double>;

// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0)
      : Tensor(std::vector<std::size_t>(shape), fill) {}

  static Tensor from_vector(Vec values);
  static Tensor from_matrix(std::size_t rows, std::size_t cols, Vec values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // Leading extent; 1 for scalars.
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  // Product of the trailing extents.
  std::size_t cols() const;

  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);
  const Vec& values() const { return data_; }

  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double squared_norm() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  Vec data_;
};

}  // namespace ssnt
