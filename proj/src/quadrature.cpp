#include "lrisk/quadrature.hpp"

#include <algorithm>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace lrisk {

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           std::span<const double> breakpoints, double relative_tolerance) {
  std::vector<double> cuts{a};
  for (double p : breakpoints) {
    if (p > a && p < b) cuts.push_back(p);
  }
  std::sort(cuts.begin() + 1, cuts.end());
  cuts.push_back(b);

  QuadratureResult total;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (!(cuts[k] < cuts[k + 1])) continue;
    double error = 0.0;
    const double piece = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        f, cuts[k], cuts[k + 1], 25, relative_tolerance, &error);
    total.value += piece;
    total.error_estimate += error * std::max(1.0, std::abs(piece));
  }
  return total;
}

}  // namespace lrisk
