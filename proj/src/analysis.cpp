#include "lrisk/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <boost/math/special_functions/erf.hpp>

#include "lrisk/errors.hpp"
#include "lrisk/quadrature.hpp"
#include "lrisk/rng.hpp"

namespace lrisk {

namespace {

// Neumaier's variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double sorted_weighted_sum(const SigmaWeights& sigma, std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) total += sigma[k] * values[k];
  return total;
}

BiasReport bias_frame(const Spectrum& spectrum, std::span<const double> losses, std::size_t m) {
  const std::size_t n = losses.size();
  if (n == 0) throw DimensionError("empty loss vector");
  if (m == 0 || m > n) throw InvalidParameter("minibatch size must lie in [1, n]");
  require_finite(losses, "loss");
  BiasReport report;
  report.n = n;
  report.m = m;
  report.full_value = l_statistic(discretize(spectrum, n), losses);
  const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
  report.range = *hi - *lo;
  report.bound = 2.0 * uniform_deviation(spectrum) * report.range * static_cast<double>(n - m) /
                 static_cast<double>(n);
  return report;
}

}  // namespace

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  long double result = 1.0L;
  for (std::size_t i = 1; i <= k; ++i) result = result * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  return static_cast<std::uint64_t>(std::llround(result));
}

BiasReport exhaustive_bias(const Spectrum& spectrum, std::span<const double> losses, std::size_t m,
                           std::uint64_t cap) {
  BiasReport report = bias_frame(spectrum, losses, m);
  const std::size_t n = losses.size();
  const std::uint64_t count = binomial(n, m);
  if (n > 14 || count > cap)
    throw EnumerationLimit("C(" + std::to_string(n) + ", " + std::to_string(m) + ") minibatches exceed the " +
                           "enumeration cap; use sampled_bias instead");
  const SigmaWeights sigma_hat = discretize(spectrum, m);
  std::vector<std::size_t> pick(m);
  std::iota(pick.begin(), pick.end(), 0);
  std::vector<double> batch(m);
  CompensatedSum total;
  for (;;) {
    for (std::size_t j = 0; j < m; ++j) batch[j] = losses[pick[j]];
    total.add(sorted_weighted_sum(sigma_hat, batch));
    ++report.batches;
    // Next combination in lexicographic order.
    std::size_t j = m;
    while (j > 0 && pick[j - 1] == n - m + j - 1) --j;
    if (j == 0) break;
    ++pick[j - 1];
    for (std::size_t k = j; k < m; ++k) pick[k] = pick[k - 1] + 1;
  }
  report.minibatch_mean = total.value() / static_cast<double>(report.batches);
  report.bias = std::abs(report.minibatch_mean - report.full_value);
  return report;
}

BiasReport sampled_bias(const Spectrum& spectrum, std::span<const double> losses, std::size_t m,
                        std::size_t samples, std::uint64_t seed) {
  BiasReport report = bias_frame(spectrum, losses, m);
  if (samples == 0) throw InvalidParameter("sampled bias needs at least one sample");
  const std::size_t n = losses.size();
  const SigmaWeights sigma_hat = discretize(spectrum, m);
  CounterRng rng(seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> batch(m);
  CompensatedSum total;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t j = 0; j < m; ++j) {
      std::swap(idx[j], idx[j + rng.below(n - j)]);
      batch[j] = losses[idx[j]];
    }
    total.add(sorted_weighted_sum(sigma_hat, batch));
  }
  report.batches = samples;
  report.minibatch_mean = total.value() / static_cast<double>(samples);
  report.bias = std::abs(report.minibatch_mean - report.full_value);
  return report;
}

// ---------------------------------------------------------------------------

void Population::validate() const {
  if (kind == PopulationKind::Exponential && !(a > 0.0)) throw InvalidParameter("exponential rate must be positive");
  if (kind == PopulationKind::LogNormal && !(b > 0.0)) throw InvalidParameter("log-normal scale must be positive");
}

std::string Population::label() const {
  return kind == PopulationKind::Exponential ? "exponential" : "lognormal";
}

double population_l_risk(const Spectrum& spectrum, const Population& population) {
  population.validate();
  const std::vector<double> jumps = spectrum.jump_points();
  std::vector<double> breaks;
  if (population.kind == PopulationKind::Exponential) {
    // t = 1 - exp(-x): F^{-1}(t) = x / rate and dt = exp(-x) dx.
    for (double t : jumps) breaks.push_back(-std::log1p(-t));
    const double rate = population.a;
    auto f = [&](double x) {
      const double t = -std::expm1(-x);
      return spectrum.density_limit(t, false) * (x / rate) * std::exp(-x);
    };
    return integrate(f, 0.0, std::numeric_limits<double>::infinity(), breaks, 1e-14).value;
  }
  // t = Phi(z): F^{-1}(t) = exp(a + b z) and dt = phi(z) dz.
  for (double t : jumps) breaks.push_back(-std::sqrt(2.0) * boost::math::erfc_inv(2.0 * t));
  const double a = population.a, b = population.b;
  auto f = [&](double z) {
    const double t = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return spectrum.density_limit(t, false) * std::exp(a + b * z - 0.5 * z * z) / std::sqrt(2.0 * M_PI);
  };
  return integrate(f, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), breaks,
                   1e-14)
      .value;
}

std::pair<double, double> fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("line fit needs two or more paired points");
  const double k = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / k;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / k;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

ConsistencyReport consistency_mse(const Spectrum& spectrum, const Population& population,
                                  std::span<const std::size_t> sizes, std::size_t reps, std::uint64_t seed,
                                  std::size_t threads) {
  population.validate();
  if (sizes.empty() || reps == 0) throw InvalidParameter("consistency check needs sizes and replicates");
  ConsistencyReport report;
  report.truth = population_l_risk(spectrum, population);
  const CounterRng root(seed);
  threads = std::max<std::size_t>(1, threads);

  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const std::size_t n = sizes[s];
    if (n == 0) throw InvalidParameter("sample sizes must be positive");
    const SigmaWeights sigma = discretize(spectrum, n);
    std::vector<double> errors(reps);
    auto work = [&](std::size_t begin, std::size_t end) {
      std::vector<double> sample(n);
      for (std::size_t r = begin; r < end; ++r) {
        CounterRng rng = root.split(s).split(r);
        for (double& z : sample)
          z = population.kind == PopulationKind::Exponential ? rng.exponential(population.a)
                                                             : std::exp(population.a + population.b * rng.normal());
        const double diff = sorted_weighted_sum(sigma, sample) - report.truth;
        errors[r] = diff * diff;
      }
    };
    if (threads == 1) {
      work(0, reps);
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (reps + threads - 1) / threads;
      for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = std::min(reps, t * chunk), end = std::min(reps, begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
      }
      for (auto& th : pool) th.join();
    }
    CompensatedSum total;
    for (double e : errors) total.add(e);
    report.sizes.push_back(n);
    report.mse.push_back(total.value() / static_cast<double>(reps));
  }

  std::vector<double> lx, ly;
  for (std::size_t s = 0; s < report.sizes.size(); ++s) {
    lx.push_back(std::log(static_cast<double>(report.sizes[s])));
    ly.push_back(std::log(report.mse[s]));
  }
  if (lx.size() >= 2) std::tie(report.slope, report.intercept) = fit_line(lx, ly);
  return report;
}

// ---------------------------------------------------------------------------

long permutation_disagreement(const SortPermutation& a, const SortPermutation& b) {
  if (a.size() != b.size()) throw DimensionError("permutation lengths differ");
  long count = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.order[k] != b.order[k]) ++count;
  return count;
}

std::vector<SensitivityCell> sorting_sensitivity(const std::vector<std::vector<std::size_t>>& orders) {
  std::vector<SensitivityCell> cells;
  if (orders.empty()) return cells;
  const auto& last = orders.back();
  for (std::size_t e = 0; e < orders.size(); ++e) {
    if (orders[e].size() != last.size()) throw DimensionError("checkpoint orders have different lengths");
    for (std::size_t k = 0; k < last.size(); ++k) cells.push_back({e, k, orders[e][k] != last[k] ? 1 : 0});
  }
  return cells;
}

std::size_t quantile_rank(std::size_t n, double p) {
  const double x = static_cast<double>(n) * p;
  double k = std::ceil(x);
  if (k - 1.0 >= 1.0 && x - (k - 1.0) <= 1e-9 * std::max(1.0, x)) k -= 1.0;
  return static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(n)));
}

std::vector<double> quantile_difference(std::span<const double> losses_erm, std::span<const double> losses_lrm,
                                        std::span<const double> p_grid, bool normalize_by_mean) {
  if (losses_erm.size() != losses_lrm.size()) throw DimensionError("loss vectors have different lengths");
  if (losses_erm.empty()) throw DimensionError("empty loss vectors");
  if (p_grid.empty()) throw InvalidParameter("quantile grid is empty");
  require_finite(losses_erm, "ERM loss");
  require_finite(losses_lrm, "LRM loss");
  std::vector<double> a(losses_erm.begin(), losses_erm.end()), b(losses_lrm.begin(), losses_lrm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double scale = 1.0;
  if (normalize_by_mean) {
    scale = std::accumulate(losses_erm.begin(), losses_erm.end(), 0.0) / static_cast<double>(a.size());
    if (scale == 0.0) throw InvalidInput("mean ERM loss is zero; cannot normalize");
  }
  std::vector<double> out;
  for (double p : p_grid) {
    if (!(p > 0.0 && p <= 1.0)) throw InvalidParameter("quantile levels must lie in (0, 1]");
    const std::size_t k = quantile_rank(a.size(), p);
    out.push_back((a[k - 1] - b[k - 1]) / scale);
  }
  return out;
}

// ---------------------------------------------------------------------------

SmoothingAudit smoothing_bound_audit(const Spectrum& spectrum, std::size_t n, std::size_t trials,
                                     std::span<const double> nu_list, Regularizer regularizer, std::uint64_t seed) {
  if (!spectrum.risk_averse()) throw InvalidParameter("the smoothing audit needs a risk-averse spectrum");
  const SigmaWeights sigma = discretize(spectrum, n);
  const Divergences div = divergence_to_uniform(spectrum);
  CounterRng rng(seed);
  SmoothingAudit audit;
  std::vector<double> losses(n);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& l : losses) l = rng.normal();
    for (double nu : nu_list) {
      const SmoothingConfig config{nu, regularizer};
      const SmoothedEval eval = smoothed_oracle(config, sigma, losses);
      const SmoothingGap gap = smoothing_gap(config, sigma, losses);
      audit.max_violation = std::max({audit.max_violation, -gap.gap, gap.gap - gap.bound});
      const double divergence_bound =
          regularizer == Regularizer::Quadratic ? nu * div.chi2 / (2.0 * static_cast<double>(n)) : nu * div.kl;
      audit.max_divergence_excess = std::max(audit.max_divergence_excess, gap.gap - divergence_bound);
      audit.max_dual_gap_ratio = std::max(audit.max_dual_gap_ratio, eval.dual_gap / (1.0 + std::abs(eval.value)));
      audit.worst_gap = std::max(audit.worst_gap, gap.gap);
      audit.all_feasible = audit.all_feasible && in_permutahedron(eval.lambda, sigma.values());
      ++audit.instances;
    }
  }
  return audit;
}

Spectrum random_risk_averse_spectrum(std::size_t kind_index, double u) {
  switch (kind_index % 4) {
    case 0: return Spectrum::uniform();
    case 1: return Spectrum::superquantile(0.05 + 0.9 * u);
    case 2: return Spectrum::extremile(1.0 + 4.0 * u);
    default: return Spectrum::esrm(0.1 + 5.0 * u);
  }
}

PavCheckReport pav_check(std::size_t instances, std::uint64_t seed) {
  CounterRng rng(seed);
  PavCheckReport report;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(49);
    const Spectrum spectrum = random_risk_averse_spectrum(t, rng.uniform());
    const SigmaWeights sigma = discretize(spectrum, n);
    const double scale = std::pow(10.0, -2.0 + 4.0 * rng.uniform());
    const bool ties = rng.uniform() < 0.2;
    std::vector<double> losses(n);
    for (double& l : losses) l = ties ? std::round(3.0 * rng.normal()) * scale : scale * rng.normal();
    const double nu = std::pow(10.0, -4.0 + 6.0 * rng.uniform());
    const bool entropic = sigma.strictly_positive() && rng.uniform() < 0.5;
    const SmoothingConfig config{nu, entropic ? Regularizer::Entropic : Regularizer::Quadratic};
    ++report.instances;
    try {
      const SmoothedEval eval = smoothed_oracle(config, sigma, losses);
      report.worst_dual_gap_ratio = std::max(report.worst_dual_gap_ratio, eval.dual_gap / (1.0 + std::abs(eval.value)));

      std::vector<double> a(eval.lambda), b(sigma.values().begin(), sigma.values().end());
      std::sort(a.begin(), a.end(), std::greater<>());
      std::sort(b.begin(), b.end(), std::greater<>());
      double sa = 0.0, sb = 0.0, slack = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        sa += a[k];
        sb += b[k];
        slack = std::min(slack, sb - sa);
      }
      slack = std::min(slack, -std::abs(sa - sb));
      report.worst_feasibility_slack = std::min(report.worst_feasibility_slack, slack);

      const SmoothingGap gap = smoothing_gap(config, sigma, losses);
      report.worst_sandwich_violation = std::max({report.worst_sandwich_violation, -gap.gap, gap.gap - gap.bound});
      if (slack < -1e-10 || !gap.ok) ++report.failures;
    } catch (const CertificateError&) {
      ++report.failures;
      report.worst_dual_gap_ratio = std::max(report.worst_dual_gap_ratio, 1.0);
    }
  }
  return report;
}

}  // namespace lrisk
