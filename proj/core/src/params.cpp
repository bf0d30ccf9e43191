// SPDX-License-Identifier: Apache-2.0
#include "snri/params.hpp"

#include <cmath>

#include <fmt/format.h>

namespace snri {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.insert_or_assign(name, std::move(value));
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                      std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0) fan_in = rows;
  if (fan_out == 0) fan_out = cols;
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.parameter(params_.at(name), name);
  bound_.emplace(name, v);
  return v;
}

}  // namespace snri
