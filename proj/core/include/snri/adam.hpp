// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "snri/autograd.hpp"
#include "snri/params.hpp"

namespace snri {

struct AdamState {
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  ParamStore m;
  ParamStore v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. Parameters missing from `grads` are
/// treated as having a zero gradient; gradients for unknown names or with a
/// mismatched shape throw.
void adam_step(ParamStore& params, const GradientMap& grads, AdamState& state);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(GradientMap& grads, double max_norm);

}  // namespace snri
