// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>

#include "snri/autograd.hpp"
#include "snri/params.hpp"

namespace snri {

/// Bound weights of one GRU cell (input dim in, hidden dim d):
///   z = sigmoid(x Wxz + h Whz + bz)
///   r = sigmoid(x Wxr + h Whr + br)
///   n = tanh(x Wxn + (r * h) Whn + bn)
///   h' = (1 - z) * h + z * n
struct GruWeights {
  Var wxz, whz, bz;
  Var wxr, whr, br;
  Var wxn, whn, bn;
};

/// Adds `<prefix>.{wxz,whz,bz,...}` to the store: Xavier matrices, zero biases.
void init_gru(ParamStore& params, const std::string& prefix, std::size_t input_dim,
              std::size_t hidden_dim, std::mt19937_64& rng);

GruWeights bind_gru(ParamBinder& bind, const std::string& prefix);

/// Batched cell over rows: x is (n x in), h_prev is (n x d).
Var gru_cell(Var x, Var h_prev, const GruWeights& w);

}  // namespace snri
