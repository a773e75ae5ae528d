#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "lrisk/errors.hpp"
#include "lrisk/optimizers.hpp"

namespace lrisk {

namespace {

using ValueGrad = std::function<double(std::span<const double>, std::span<double>)>;

double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

struct SmoothResult {
  double value;
  double grad_norm;
  bool converged;
};

// Barzilai-Borwein gradient descent with a nonmonotone Armijo safeguard.
// Modifies w in place.
SmoothResult minimize_smooth(const ValueGrad& fg, std::vector<double>& w, double tol, std::size_t max_iter) {
  const std::size_t d = w.size();
  std::vector<double> g(d), w_new(d), g_new(d);
  double f = fg(w, g);
  double step = 1.0 / std::max(1.0, norm(g));
  std::deque<double> recent{f};
  for (std::size_t it = 0; it < max_iter; ++it) {
    const double gn = norm(g);
    if (gn <= tol) return {f, gn, true};
    const double reference = *std::max_element(recent.begin(), recent.end());
    double f_new = 0.0;
    bool accepted = false;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      for (std::size_t j = 0; j < d; ++j) w_new[j] = w[j] - step * g[j];
      f_new = fg(w_new, g_new);
      const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(reference);
      if (std::isfinite(f_new) && f_new <= reference - 1e-4 * step * gn * gn + slack) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return {f, gn, false};
    double ss = 0.0, sy = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double s = w_new[j] - w[j];
      const double y = g_new[j] - g[j];
      ss += s * s;
      sy += s * y;
    }
    w.swap(w_new);
    g.swap(g_new);
    f = f_new;
    recent.push_back(f);
    if (recent.size() > 10) recent.pop_front();
    step = sy > 0.0 ? ss / sy : 2.0 * step;
    if (!(step > 0.0) || !std::isfinite(step)) step = 1.0;
  }
  return {f, norm(g), false};
}

// Golden-section search for the minimum of the objective on [a, b].
std::vector<double> segment_minimum(const RegularizedObjective& obj, const std::vector<double>& a,
                                    const std::vector<double>& b) {
  auto point = [&](double t) {
    std::vector<double> x(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) x[j] = a[j] + t * (b[j] - a[j]);
    return x;
  };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = obj.value(point(x1)), f2 = obj.value(point(x2));
  for (int it = 0; it < 80; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = obj.value(point(x1));
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = obj.value(point(x2));
    }
  }
  return point(f1 <= f2 ? x1 : x2);
}

}  // namespace

ReferenceResult reference_solve(const RegularizedObjective& obj, const ReferenceOptions& options) {
  if (!(obj.mu() > 0.0)) throw InvalidParameter("the reference solver needs mu > 0");
  const LossModel& model = obj.model();
  const double mu = obj.mu();
  const std::size_t n = obj.size();

  std::vector<double> w = options.initial.empty() ? std::vector<double>(obj.dim(), 0.0) : options.initial;
  if (w.size() != obj.dim()) throw DimensionError("warm start has the wrong length");

  std::vector<double> best = w;
  double best_value = obj.value(w);
  auto offer = [&](const std::vector<double>& candidate) {
    const double v = obj.value(candidate);
    if (v < best_value) {
      best_value = v;
      best = candidate;
    }
  };

  // Stage 1: smoothed objectives with decreasing nu give a good starting
  // point. The smoothed maximizer lambda_nu lies in the permutahedron, so the
  // minimum of the reweighted problem at lambda_nu is a lower bound.
  double lower = -std::numeric_limits<double>::infinity();
  auto reweighted = [&](const std::vector<double>& lambda) {
    return ValueGrad([&model, &lambda, mu, n](std::span<const double> x, std::span<double> g) {
      std::fill(g.begin(), g.end(), 0.0);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (lambda[i] != 0.0) total += lambda[i] * model.add_gradient(x, i, lambda[i], g);
      for (std::size_t j = 0; j < x.size(); ++j) g[j] += mu * x[j];
      return total + 0.5 * mu * squared_norm(x);
    });
  };
  if (obj.sigma().non_decreasing() && obj.sigma().max() != obj.sigma()[0]) {
    for (double nu : {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
      const SmoothingConfig config{nu, Regularizer::Quadratic};
      ValueGrad fg = [&](std::span<const double> x, std::span<double> g) {
        const std::vector<double> losses = model.losses(x);
        for (double l : losses)
          if (!std::isfinite(l)) return std::numeric_limits<double>::infinity();
        const SmoothedEval eval = smoothed_oracle(config, obj.sigma(), losses);
        std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
          if (eval.lambda[i] != 0.0) model.add_gradient(x, i, eval.lambda[i], g);
        for (std::size_t j = 0; j < x.size(); ++j) g[j] += mu * x[j];
        return eval.value + 0.5 * mu * squared_norm(x);
      };
      minimize_smooth(fg, w, std::max(options.tolerance, 1e-9), options.max_iterations / 4);
      offer(w);
      const std::vector<double> lambda_nu = smoothed_oracle(config, obj.sigma(), model.losses(w)).lambda;
      std::vector<double> x = w;
      const SmoothResult r = minimize_smooth(reweighted(lambda_nu), x, options.tolerance, options.max_iterations);
      if (r.converged) lower = std::max(lower, r.value - r.grad_norm * r.grad_norm / (2.0 * mu));
      offer(x);
    }
  }

  // Stage 2: freeze the weights implied by the current sort, solve the smooth
  // reweighted problem, and repeat until the sort reproduces itself. Each
  // reweighted minimum is a lower bound on the optimum, because the frozen
  // weights lie in the permutahedron and R is the maximum over it.
  ReferenceResult result;
  std::vector<std::vector<std::size_t>> orders;
  std::vector<std::vector<double>> points;
  for (int round = 0; round < 100; ++round) {
    const SortPermutation perm = argsort_losses(model.losses(w));
    if (!orders.empty() && perm.order == orders.back()) {
      result.sort_stable = true;
      break;
    }
    const auto seen = std::find(orders.begin(), orders.end(), perm.order);
    if (seen != orders.end()) {
      // The sort cycles: the optimum sits on a tie. Search the segments
      // between the points of the cycle.
      for (auto it = points.begin() + (seen - orders.begin()); it + 1 != points.end(); ++it)
        offer(segment_minimum(obj, *it, *(it + 1)));
      offer(segment_minimum(obj, points.back(), *(points.begin() + (seen - orders.begin()))));
      break;
    }
    orders.push_back(perm.order);
    const std::vector<double> lambda = rank_weights(obj.sigma(), perm);
    const SmoothResult r = minimize_smooth(reweighted(lambda), w, options.tolerance, options.max_iterations);
    points.push_back(w);
    offer(w);
    if (!r.converged) break;
    lower = std::max(lower, r.value - r.grad_norm * r.grad_norm / (2.0 * mu));
  }
  result.lower_bound = lower;
  const double target = options.tolerance * (1.0 + std::abs(best_value));
  if (result.sort_stable || best_value - lower <= target) {
    result.w = best;
    result.value = best_value;
    return result;
  }

  // Stage 3: the optimum sits on a tie between losses. Polish with decaying
  // subgradient steps and keep the best point.
  w = best;
  std::vector<double> g(obj.dim());
  obj.value_and_subgradient(w, g);
  const double step0 = 1.0 / (mu * static_cast<double>(n) + norm(g) + 1.0);
  for (std::size_t k = 0; k < options.polish_iterations; ++k) {
    obj.value_and_subgradient(w, g);
    const double step = step0 / static_cast<double>(k + 1);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * g[j];
    offer(w);
  }
  if (best_value - lower <= target) {
    result.w = best;
    result.value = best_value;
    return result;
  }
  throw ReferenceNotConverged("reference solver could not certify its optimum (gap " +
                                  std::to_string(best_value - lower) + ")",
                              best, best_value);
}

}  // namespace lrisk
