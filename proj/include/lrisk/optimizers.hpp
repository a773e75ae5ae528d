#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrisk/errors.hpp"
#include "lrisk/risk_core.hpp"
#include "lrisk/smoothing.hpp"
#include "lrisk/spectra.hpp"

namespace lrisk {

enum class Algorithm { Sgd, Srda, LsvrgUniform, LsvrgSmoothed, LsvrgEpochNonuniform, QSvrg, ReferenceFullBatch };

std::string algorithm_name(Algorithm algorithm);
Algorithm algorithm_from_name(const std::string& name);

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::Sgd;
  double learning_rate = 1e-2;
  bool decaying = false;        // SGD only: eta_t = 1 / (mu (t + 1))
  std::size_t batch_size = 64;  // SGD, SRDA
  std::size_t epoch_length = 0;  // LSVRG variants; 0 means n
  double checkpoint_prob = 0.0;  // LSVRG uniform and smoothed, q-SVRG
  std::optional<SmoothingConfig> smoothing;
  std::uint64_t seed = 0;
  std::size_t max_passes = 64;
  // Gradient evaluations per measured pass; 0 means n.
  std::size_t pass_size = 0;
  // Stop after this many iterations instead of max_passes when nonzero.
  std::size_t max_steps = 0;
  std::vector<double> initial;  // empty: zeros

  // Permutation at w*, used for the per-row disagreement count.
  std::vector<std::size_t> reference_order;
  // Keep the sorting permutation of every LSVRG checkpoint.
  bool track_permutations = false;
  // Record the iterate after every step (tests only).
  bool record_iterates = false;

  // Throws InvalidParameter on values outside their domains and warns about
  // fields the chosen algorithm ignores.
  void validate(std::size_t n) const;
};

struct MeasurementRow {
  std::size_t pass = 0;            // measurement index
  double pass_count = 0.0;         // gradient evaluations / n
  double objective = 0.0;  // R_{sigma,mu} at the current iterate w^(T)
  // SGD: at the averaged output (w^(0) + ... + w^(T-1)) / T; otherwise equal to objective.
  double averaged_objective = 0.0;
  std::optional<double> suboptimality;
  double wall_seconds = 0.0;
  long disagreement = -1;           // -1 when no reference order was given
};

struct RunRecord {
  OptimizerConfig config;
  std::vector<MeasurementRow> rows;
  std::vector<double> final_w;
  std::vector<double> averaged_w;  // SGD only: the averaged output point
  std::vector<double> best_w;      // measured iterate with the lowest objective
  double best_objective = 0.0;
  bool diverged = false;
  std::uint64_t gradient_evaluations = 0;
  std::size_t steps = 0;
  std::vector<std::vector<std::size_t>> checkpoint_orders;
  std::vector<std::vector<double>> iterates;

  double final_objective() const { return rows.empty() ? 0.0 : rows.back().objective; }
};

RunRecord sgd_run(const RegularizedObjective& obj, const Spectrum& spectrum, const OptimizerConfig& cfg);
RunRecord srda_run(const RegularizedObjective& obj, const Spectrum& spectrum, const OptimizerConfig& cfg);
RunRecord lsvrg_run(const RegularizedObjective& obj, const OptimizerConfig& cfg);
RunRecord lsvrg_smoothed_run(const RegularizedObjective& obj, const OptimizerConfig& cfg);
RunRecord lsvrg_epoch_run(const RegularizedObjective& obj, const OptimizerConfig& cfg);

// Dispatches on cfg.algorithm (not QSvrg or ReferenceFullBatch).
RunRecord run_optimizer(const RegularizedObjective& obj, const Spectrum& spectrum, const OptimizerConfig& cfg);

struct QsvrgResult {
  std::vector<double> w;
  std::vector<std::vector<double>> snapshots;  // iterate after each requested step count
  bool diverged = false;
};

// q-SVRG on (1/n) sum_i f_i with f_i = l_i + mu/2 ||w||^2, for cfg.max_steps
// iterations. Snapshots are taken at the given (ascending) step counts.
QsvrgResult qsvrg_run(const LossModel& model, double mu, const OptimizerConfig& cfg,
                      std::span<const std::size_t> snapshot_steps = {});

// Per-step direction estimators, exposed so tests can average them exactly
// over every possible random draw. None of them include the mu w term.

// sum_j sigma_hat_j grad l_{i_(j)}(w) over the minibatch, sorted by loss.
std::vector<double> minibatch_direction(const LossModel& model, const SigmaWeights& sigma_hat,
                                        std::span<const double> w, std::span<const std::size_t> batch);

// n lambda_i (grad l_i(w) - grad l_i(w_bar)) + g_bar
std::vector<double> lsvrg_direction(const LossModel& model, std::span<const double> lambda,
                                    std::span<const double> w, std::span<const double> w_bar,
                                    std::span<const double> g_bar, std::size_t i);

// grad l_{pi(k)}(w) - grad l_{pi(k)}(w_bar) + g_bar
std::vector<double> epoch_direction(const LossModel& model, const SortPermutation& pi, std::span<const double> w,
                                    std::span<const double> w_bar, std::span<const double> g_bar, std::size_t k);

// sum_i lambda_i grad l_i(w)
std::vector<double> weighted_gradient(const LossModel& model, std::span<const double> lambda,
                                      std::span<const double> w);

// Hamming distance between two sorting permutations.
long permutation_distance(const SortPermutation& a, std::span<const std::size_t> b);

// ---------------------------------------------------------------------------
// Theory-driven smoothed LSVRG settings: nu >= 4 n G^2 / mu,
// N = 4 (n + 8 kappa), eta = 2 / ((n + 8 kappa) mu), kappa = n sigma_max L / mu + 1.
struct TheoreticalSettings {
  double nu = 0.0;
  std::size_t epoch_length = 0;
  double learning_rate = 0.0;
  double kappa = 0.0;
};

TheoreticalSettings theoretical_preset(std::size_t n, double sigma_max, double mu, double lipschitz,
                                       double smoothness);

// ---------------------------------------------------------------------------
// Reference solver

struct ReferenceOptions {
  double tolerance = 1e-10;  // gradient-norm target of the smooth phases
  std::size_t max_iterations = 20000;
  std::size_t polish_iterations = 500;
  std::vector<double> initial;  // warm start; empty means zeros
};

struct ReferenceResult {
  std::vector<double> w;
  double value = 0.0;
  bool sort_stable = false;  // the final sorting-refinement round reproduced its own order
  double lower_bound = 0.0;  // certified lower bound on the optimal value
};

// High-accuracy minimizer of R_{sigma,mu}. Requires mu > 0. Throws
// ReferenceNotConverged (carrying the best point) when no stage certifies.
ReferenceResult reference_solve(const RegularizedObjective& obj, const ReferenceOptions& options = {});

}  // namespace lrisk
