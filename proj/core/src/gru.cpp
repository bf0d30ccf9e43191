// SPDX-License-Identifier: Apache-2.0
#include "snri/gru.hpp"

#include <fmt/format.h>

namespace snri {

void init_gru(ParamStore& params, const std::string& prefix, std::size_t input_dim,
              std::size_t hidden_dim, std::mt19937_64& rng) {
  for (const char* gate : {"z", "r", "n"}) {
    params.add(fmt::format("{}.wx{}", prefix, gate), xavier_uniform(input_dim, hidden_dim, rng));
    params.add(fmt::format("{}.wh{}", prefix, gate), xavier_uniform(hidden_dim, hidden_dim, rng));
    params.add(fmt::format("{}.b{}", prefix, gate), Tensor::zeros(1, hidden_dim));
  }
}

GruWeights bind_gru(ParamBinder& bind, const std::string& prefix) {
  auto p = [&](const char* s) { return bind(prefix + "." + s); };
  return {p("wxz"), p("whz"), p("bz"), p("wxr"), p("whr"), p("br"),
          p("wxn"), p("whn"), p("bn")};
}

Var gru_cell(Var x, Var h_prev, const GruWeights& w) {
  using namespace ops;
  if (x.rows() != h_prev.rows() || x.cols() != w.wxz.rows() ||
      h_prev.cols() != w.whz.rows()) {
    throw Error(fmt::format("gru_cell: input {} / hidden {} do not fit weights {} / {}",
                            x.value().shape_str(), h_prev.value().shape_str(),
                            w.wxz.value().shape_str(), w.whz.value().shape_str()));
  }
  Var z = sigmoid(add_row(add(matmul(x, w.wxz), matmul(h_prev, w.whz)), w.bz));
  Var r = sigmoid(add_row(add(matmul(x, w.wxr), matmul(h_prev, w.whr)), w.br));
  Var n = ops::tanh(add_row(add(matmul(x, w.wxn), matmul(mul(r, h_prev), w.whn)), w.bn));
  // (1 - z) * h + z * n
  return add(mul(affine(z, -1.0, 1.0), h_prev), mul(z, n));
}

}  // namespace snri
