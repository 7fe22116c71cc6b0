// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

#include "udd/tensor.hpp"

namespace udd {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = false;
};

/// Compares backward() gradients of a scalar function against central
/// differences (f(x + h e_i) - f(x - h e_i)) / 2h, coordinate by coordinate.
///
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3);
/// the floor keeps near-zero coordinates from reporting noise as failure.
/// `x` must be a leaf; its values are perturbed in place and restored.
GradCheckReport check_gradients(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h,
                                double tol);

}  // namespace udd
