#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lrisk/risk_core.hpp"
#include "lrisk/smoothing.hpp"
#include "lrisk/spectra.hpp"

namespace lrisk {

// ---------------------------------------------------------------------------
// Minibatch bias

struct BiasReport {
  std::size_t n = 0;
  std::size_t m = 0;
  double full_value = 0.0;      // R_sigma(l)
  double minibatch_mean = 0.0;  // E over minibatches of the size-m estimate
  double bias = 0.0;
  double bound = 0.0;  // 2 C_s B (n - m) / n
  double range = 0.0;  // B = l_(n) - l_(1)
  std::uint64_t batches = 0;
};

// Enumerates all C(n, m) minibatches. Throws EnumerationLimit above `cap`.
BiasReport exhaustive_bias(const Spectrum& spectrum, std::span<const double> losses, std::size_t m,
                           std::uint64_t cap = 1000000);

// Monte-Carlo version for sizes beyond enumeration; `bias` carries sampling noise.
BiasReport sampled_bias(const Spectrum& spectrum, std::span<const double> losses, std::size_t m,
                        std::size_t samples, std::uint64_t seed);

std::uint64_t binomial(std::size_t n, std::size_t k);

// ---------------------------------------------------------------------------
// Consistency of the empirical L-risk

enum class PopulationKind { Exponential, LogNormal };

struct Population {
  PopulationKind kind = PopulationKind::Exponential;
  double a = 1.0;  // Exponential rate, or log-normal location
  double b = 1.0;  // log-normal scale

  static Population exponential(double rate) { return {PopulationKind::Exponential, rate, 0.0}; }
  static Population lognormal(double location, double scale) { return {PopulationKind::LogNormal, location, scale}; }
  void validate() const;
  std::string label() const;
};

// L_s[F] = integral of s(t) F^{-1}(t) dt by adaptive quadrature.
double population_l_risk(const Spectrum& spectrum, const Population& population);

struct ConsistencyReport {
  std::vector<std::size_t> sizes;
  std::vector<double> mse;
  double truth = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
};

ConsistencyReport consistency_mse(const Spectrum& spectrum, const Population& population,
                                  std::span<const std::size_t> sizes, std::size_t reps, std::uint64_t seed,
                                  std::size_t threads = 1);

// Least-squares slope and intercept of y against x.
std::pair<double, double> fit_line(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Sorting sensitivity and quantiles

long permutation_disagreement(const SortPermutation& a, const SortPermutation& b);

struct SensitivityCell {
  std::size_t epoch = 0;
  std::size_t position = 0;
  int disagreement = 0;  // 1 when the epoch's order differs from the last one here
};

// Compares every checkpoint order against the final one.
std::vector<SensitivityCell> sorting_sensitivity(const std::vector<std::vector<std::size_t>>& orders);

// l_(ceil(n p))(ERM) - l_(ceil(n p))(LRM) per p, optionally divided by the
// mean ERM loss.
std::vector<double> quantile_difference(std::span<const double> losses_erm, std::span<const double> losses_lrm,
                                        std::span<const double> p_grid, bool normalize_by_mean);

// ceil(n p) with a guard against p * n landing a rounding error above an integer.
std::size_t quantile_rank(std::size_t n, double p);

// ---------------------------------------------------------------------------
// Smoothing audits

struct SmoothingAudit {
  std::size_t instances = 0;
  double max_violation = 0.0;       // of 0 <= h - h_nu <= nu Omega(sigma), positive when violated
  double max_divergence_excess = 0.0;  // gap minus nu chi2/(2n) or nu KL, positive when violated
  double max_dual_gap_ratio = 0.0;  // dual_gap / (1 + |value|)
  double worst_gap = 0.0;
  bool all_feasible = true;
  bool passed() const { return max_violation <= 1e-9 && max_divergence_excess <= 1e-9 && all_feasible; }
};

SmoothingAudit smoothing_bound_audit(const Spectrum& spectrum, std::size_t n, std::size_t trials,
                                     std::span<const double> nu_list, Regularizer regularizer, std::uint64_t seed);

// Randomized instances over every risk-averse kind, both regularizers.
struct PavCheckReport {
  std::size_t instances = 0;
  std::size_t failures = 0;
  double worst_dual_gap_ratio = 0.0;
  double worst_feasibility_slack = 0.0;  // most negative majorization slack
  double worst_sandwich_violation = 0.0;
  bool passed() const { return failures == 0; }
};

PavCheckReport pav_check(std::size_t instances, std::uint64_t seed);

// Random spectrum of a risk-averse kind with parameters drawn from the rng.
Spectrum random_risk_averse_spectrum(std::size_t kind_index, double u);

}  // namespace lrisk
