// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "eegfmri/tensor.hpp"

namespace eegfmri {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the backward() gradient of f at x against central differences.
/// Relative error per element is |a - n| / max(|a|, |n|, floor); the floor
/// keeps round-off on near-zero gradients from dominating.
GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double eps = 1e-6, double floor = 1e-6);

}  // namespace eegfmri
