#pragma once

#include <functional>
#include <span>

namespace lrisk {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
};

// Adaptive Gauss-Kronrod (61-point) integration of f over [a, b], split at
// the given interior breakpoints (discontinuities of f). Infinite limits are
// allowed. The integrand is never evaluated at a or b or at a breakpoint.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           std::span<const double> breakpoints = {},
                           double relative_tolerance = 1e-13);

}  // namespace lrisk
