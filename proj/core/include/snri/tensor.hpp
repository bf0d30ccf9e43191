// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense row-major double tensor used by every numeric path in snri.
 *
 * Ops treat a tensor as a matrix: rank-2 tensors are (rows, cols) and rank-1
 * tensors of length n are read as a single 1 x n row. Higher ranks are only
 * carried through serialization.
 */
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace snri {

/// Base error for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor scalar(double value) { return Tensor({1, 1}, {value}); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Value of a 1 x 1 tensor.
  double item() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept {
    return rows() == other.rows() && cols() == other.cols();
  }
  void fill(double value);
  Tensor reshaped(std::vector<std::size_t> shape) const;

  std::string shape_str() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace snri
