// SPDX-License-Identifier: Apache-2.0
#include "snri/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>

namespace snri {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_shape(const std::vector<std::size_t>& shape) {
  for (auto d : shape) {
    if (d == 0) {
      throw Error(fmt::format("tensor shape {} has a zero dimension",
                              shape_str(shape)));
    }
  }
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_.empty() ? 0 : product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if ((shape_.empty() ? 0 : product(shape_)) != data_.size()) {
    throw Error(fmt::format("tensor shape {} does not match {} values",
                            snri::shape_str(shape_), data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  if (shape_.size() == 1) return shape_[0];
  return data_.size() / shape_[0];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw Error(fmt::format("item() on non-scalar tensor {}", shape_str()));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

std::string Tensor::shape_str() const { return snri::shape_str(shape_); }

}  // namespace snri
