#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lrisk/analysis.hpp"
#include "lrisk/config.hpp"
#include "lrisk/data.hpp"
#include "lrisk/optimizers.hpp"

namespace lrisk {

struct Problem {
  SplitDataset data;
  std::unique_ptr<LossModel> train;
  std::unique_ptr<LossModel> test;
};

// Builds the dataset named by the config and the loss models on both splits.
Problem build_problem(const ExperimentConfig& config);

OptimizerConfig make_optimizer_config(const ExperimentConfig& config, Algorithm algorithm, double eta,
                                      std::uint64_t seed, std::size_t n_train);

// Runs fn(0), ..., fn(count - 1) on up to `threads` workers. The first
// exception (by index) is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Learning-rate selection

struct GridPoint {
  double eta = 0.0;
  double score = 0.0;  // mean final train objective over seeds; +inf if any seed diverged
};

struct GridChoice {
  Algorithm algorithm = Algorithm::Sgd;
  double eta = 0.0;
  std::vector<GridPoint> points;  // ascending eta
};

// Picks argmin of the score, ties toward the smaller eta. Throws
// AllDivergedError when every score is infinite.
GridChoice grid_search(const ExperimentConfig& config, const RegularizedObjective& objective,
                       const Spectrum& spectrum, Algorithm algorithm, std::size_t threads = 1);

struct GridSearchResult {
  Spectrum spectrum;
  std::vector<GridChoice> choices;
};

std::vector<GridSearchResult> grid_search(const ExperimentConfig& config, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Trajectories

// (R(w_t) - R*) / (R(w_0) - R*) per measured pass. Diverged rows give +inf.
std::vector<double> gap_curve(const RunRecord& record, double optimum);

struct ObjectiveRun {
  Spectrum spectrum;
  double mu = 0.0;
  ReferenceResult reference;
  bool reference_certified = true;
  std::vector<GridChoice> choices;
  std::vector<RunRecord> runs;  // algorithm-major, then seed in config order
  std::vector<std::vector<double>> gaps;
};

struct ExperimentResult {
  std::string dataset;
  std::vector<ObjectiveRun> objectives;
};

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t threads = 1);

// Writes one JSONL file per run, gaps.csv, summary.json and, when the config
// asks for it, timing.csv. File contents are independent of thread count.
void write_experiment(const ExperimentConfig& config, const ExperimentResult& result,
                      const std::filesystem::path& out_dir);

struct PlotCurve {
  std::string objective;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<double> gaps;  // index = pass
};

// Long-format CSV with header objective,algorithm,seed,pass,gap. Pass 0 is
// left out since every curve starts at 1. Returns the number of data rows.
std::size_t emit_plot_data(std::span<const PlotCurve> curves, std::ostream& out);

// ---------------------------------------------------------------------------
// Clustering

// Fraction of labelled points (label >= 0) assigned correctly under the best
// relabelling of the centers. Needs k <= 8.
double best_permutation_accuracy(const KMeansLoss& model, std::span<const double> centers, const Dataset& data);

struct ClusteringRun {
  Spectrum spectrum;
  std::uint64_t seed = 0;
  double eta = 0.0;
  std::size_t dim = 0;  // coordinates per center
  std::vector<double> centers;
  double train_objective = 0.0;
  double train_accuracy = 0.0;  // inliers only
  double test_accuracy = 0.0;
};

// Minibatch SGD from centers at 0 for every (spectrum, seed). The dataset is
// regenerated per seed. A one-point lr_grid is used as is, otherwise eta is
// picked per spectrum by grid search on the first seed's data.
std::vector<ClusteringRun> run_clustering(const ExperimentConfig& config, std::size_t threads = 1);

void write_clustering(const std::vector<ClusteringRun>& runs, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Sorting sensitivity and quantile differences

struct SensitivityResult {
  Spectrum spectrum;
  double eta = 0.0;
  RunRecord run;
  std::vector<SensitivityCell> cells;
};

// LSVRG with permutation tracking on each spectrum, first seed.
std::vector<SensitivityResult> run_sensitivity(const ExperimentConfig& config, std::size_t threads = 1);

void write_sensitivity(const std::vector<SensitivityResult>& results, const std::filesystem::path& out_dir);

struct QuantileDiffResult {
  Spectrum spectrum;
  std::vector<double> p_grid;
  std::vector<double> train_diff;
  std::vector<double> test_diff;
};

// Solves ERM and each L-risk objective with the reference solver and compares
// loss quantiles on both splits.
std::vector<QuantileDiffResult> run_quantile_diff(const ExperimentConfig& config);

void write_quantile_diff(const std::vector<QuantileDiffResult>& results, const std::filesystem::path& out_dir);

}  // namespace lrisk
