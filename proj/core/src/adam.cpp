// SPDX-License-Identifier: Apache-2.0
#include "snri/adam.hpp"

#include <cmath>

#include <fmt/format.h>

namespace snri {

void adam_step(ParamStore& params, const GradientMap& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) {
      throw Error(fmt::format("adam: gradient for unknown parameter '{}'", name));
    }
    if (params.at(name).shape() != g.shape()) {
      throw Error(fmt::format("adam: gradient {} does not match parameter '{}' {}",
                              g.shape_str(), name, params.at(name).shape_str()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);

  for (auto& [name, p] : params) {
    if (!state.m.contains(name)) {
      state.m.add(name, Tensor(p.shape()));
      state.v.add(name, Tensor(p.shape()));
    }
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    if (m.shape() != p.shape()) {
      throw Error(fmt::format("adam: moment shape {} does not match parameter '{}' {}",
                              m.shape_str(), name, p.shape_str()));
    }
    auto git = grads.find(name);
    auto pd = p.data();
    auto md = m.data();
    auto vd = v.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double g = git == grads.end() ? 0.0 : git->second[i];
      md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * g;
      vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * g * g;
      const double mhat = md[i] / bc1;
      const double vhat = vd[i] / bc2;
      pd[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_grad_norm(GradientMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (double x : g.data()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [_, g] : grads) {
      for (double& x : g.data()) x *= s;
    }
  }
  return norm;
}

}  // namespace snri
