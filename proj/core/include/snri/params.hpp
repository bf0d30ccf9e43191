// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>

#include "snri/autograd.hpp"
#include "snri/tensor.hpp"

namespace snri {

/// Named trainable tensors, iterated in name order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t num_scalars() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::map<std::string, Tensor> params_;
};

/// Glorot/Xavier uniform init over a fan_in x fan_out matrix.
Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                      std::size_t fan_in = 0, std::size_t fan_out = 0);

/// Lazily binds parameters of a store as leaves of one tape, once per name.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParamStore& params) : tape_(tape), params_(params) {}
  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const ParamStore& params_;
  std::unordered_map<std::string, Var> bound_;
};

}  // namespace snri
