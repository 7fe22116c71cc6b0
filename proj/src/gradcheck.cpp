// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace udd {

GradCheckReport check_gradients(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h,
                                double tol) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradients: h must be positive");
  if (!x.is_leaf()) throw std::invalid_argument("check_gradients: x must be a leaf tensor");

  const bool had_grad = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(x);
    if (y.numel() != 1) {
      x.set_requires_grad(had_grad);
      throw std::invalid_argument("check_gradients: f must return a scalar, got " + shape_str(y.shape()));
    }
    if (y.requires_grad()) tape.backward(y);
    analytic = x.grad();
  }
  x.set_requires_grad(had_grad);

  NoGradScope no_grad;
  auto eval = [&]() { return f(x).item(); };

  GradCheckReport report;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double fp = eval();
    values[i] = orig - h;
    const double fm = eval();
    values[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (i == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace udd
