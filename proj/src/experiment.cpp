#include "lrisk/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lrisk/analysis.hpp"
#include "lrisk/errors.hpp"
#include "lrisk/io.hpp"
#include "lrisk/log.hpp"

namespace lrisk {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t class_count(const SplitDataset& data) {
  int top = -1;
  for (int c : data.train.classes) top = std::max(top, c);
  for (int c : data.test.classes) top = std::max(top, c);
  return static_cast<std::size_t>(top + 1);
}

std::unique_ptr<LossModel> make_model(LossKind kind, const Dataset& data, std::size_t classes) {
  switch (kind) {
    case LossKind::Squared: return std::make_unique<SquaredLoss>(data);
    case LossKind::Logistic: return std::make_unique<MultinomialLogistic>(data, classes);
    case LossKind::KMeans: return std::make_unique<KMeansLoss>(data, classes);
  }
  throw ConfigError("unknown loss kind");
}

}  // namespace

Problem build_problem(const ExperimentConfig& config) {
  config.validate();
  Problem problem;
  const DatasetSpec& spec = config.dataset;
  std::size_t classes = 0;
  switch (spec.source) {
    case DatasetSource::Simulated:
      if (config.loss != LossKind::Squared) throw ConfigError("the simulated dataset needs the squared loss");
      problem.data = generate_simulated(spec.n, spec.d, spec.seed);
      break;
    case DatasetSource::Clusters:
      if (config.loss != LossKind::KMeans) throw ConfigError("the clusters dataset needs the kmeans loss");
      try {
        problem.data = generate_gaussian_clusters(spec.layout, spec.seed);
      } catch (const InvalidParameter& e) {
        throw ConfigError(e.what());
      }
      classes = config.clusters;
      if (classes > problem.data.train.n)
        throw ConfigError("clusters (" + std::to_string(classes) + ") exceeds the number of points");
      break;
    case DatasetSource::Csv: {
      CsvOptions options;
      options.target_column = spec.target_column;
      options.split_seed = spec.seed;
      options.target_kind = config.loss == LossKind::Logistic ? TargetKind::Classification
                            : config.loss == LossKind::KMeans ? TargetKind::None
                                                              : TargetKind::Regression;
      problem.data = load_csv(spec.csv_path, options).data;
      classes = config.loss == LossKind::KMeans ? config.clusters : class_count(problem.data);
      if (config.loss == LossKind::KMeans && classes > problem.data.train.n)
        throw ConfigError("clusters exceeds the number of points");
      break;
    }
  }
  problem.train = make_model(config.loss, problem.data.train, classes);
  problem.test = make_model(config.loss, problem.data.test, classes);
  return problem;
}

OptimizerConfig make_optimizer_config(const ExperimentConfig& config, Algorithm algorithm, double eta,
                                      std::uint64_t seed, std::size_t n_train) {
  OptimizerConfig c;
  c.algorithm = algorithm;
  c.learning_rate = eta;
  c.seed = seed;
  c.max_passes = config.max_passes;
  c.pass_size = config.pass_size;
  switch (algorithm) {
    case Algorithm::Sgd:
    case Algorithm::Srda:
      c.batch_size = std::min(config.batch_size, n_train);
      break;
    case Algorithm::LsvrgSmoothed:
      c.smoothing = config.smoothing_for(n_train);
      [[fallthrough]];
    case Algorithm::LsvrgUniform:
      c.checkpoint_prob = config.checkpoint_prob;
      [[fallthrough]];
    case Algorithm::LsvrgEpochNonuniform:
      c.epoch_length = config.epoch_length;
      break;
    default:
      break;
  }
  return c;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::vector<std::exception_ptr> errors(count);
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------

GridChoice grid_search(const ExperimentConfig& config, const RegularizedObjective& objective,
                       const Spectrum& spectrum, Algorithm algorithm, std::size_t threads) {
  std::vector<double> grid = config.lr_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const std::size_t seeds = config.seeds.size();
  std::vector<double> finals(grid.size() * seeds);
  parallel_for(finals.size(), threads, [&](std::size_t task) {
    const std::size_t g = task / seeds, s = task % seeds;
    const OptimizerConfig oc =
        make_optimizer_config(config, algorithm, grid[g], config.seeds[s], objective.size());
    const RunRecord r = run_optimizer(objective, spectrum, oc);
    finals[task] = r.diverged ? kInf : r.final_objective();
  });

  GridChoice choice;
  choice.algorithm = algorithm;
  double best = kInf;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) sum += finals[g * seeds + s];
    const double score = std::isfinite(sum) ? sum / static_cast<double>(seeds) : kInf;
    choice.points.push_back({grid[g], score});
    if (score < best) {
      best = score;
      choice.eta = grid[g];
    }
  }
  if (!std::isfinite(best)) throw AllDivergedError(algorithm_name(algorithm));
  return choice;
}

std::vector<GridSearchResult> grid_search(const ExperimentConfig& config, std::size_t threads) {
  const Problem problem = build_problem(config);
  const std::size_t n = problem.train->size();
  std::vector<GridSearchResult> out;
  for (const Spectrum& spectrum : config.spectra) {
    const RegularizedObjective objective(discretize(spectrum, n), config.mu_for(n), *problem.train);
    GridSearchResult result{spectrum, {}};
    for (Algorithm a : config.algorithms) result.choices.push_back(grid_search(config, objective, spectrum, a, threads));
    out.push_back(std::move(result));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> gap_curve(const RunRecord& record, double optimum) {
  std::vector<double> gaps;
  if (record.rows.empty()) return gaps;
  const double denom = record.rows.front().objective - optimum;
  for (const MeasurementRow& row : record.rows) {
    if (!std::isfinite(row.objective)) {
      gaps.push_back(kInf);
    } else if (denom > 0.0) {
      gaps.push_back((row.objective - optimum) / denom);
    } else {
      // Started at the optimum.
      gaps.push_back(row.objective - optimum <= 0.0 ? 0.0 : kInf);
    }
  }
  gaps.front() = denom > 0.0 ? 1.0 : gaps.front();
  return gaps;
}

namespace {

ReferenceResult solve_reference(const RegularizedObjective& objective, std::vector<double> start, bool& certified) {
  ReferenceOptions options;
  options.initial = std::move(start);
  try {
    ReferenceResult r = reference_solve(objective, options);
    certified = true;
    return r;
  } catch (const ReferenceNotConverged& e) {
    log_warning(std::string(e.what()) + "; using the best point found");
    certified = false;
    ReferenceResult r;
    r.w = e.best();
    r.value = e.best_value();
    r.lower_bound = -kInf;
    return r;
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::size_t threads) {
  const Problem problem = build_problem(config);
  const std::size_t n = problem.train->size();
  if (config.mu_for(n) <= 0.0) throw ConfigError("run needs mu > 0 for the reference solution");
  ExperimentResult result;
  result.dataset = config.dataset.name();

  for (const Spectrum& spectrum : config.spectra) {
    ObjectiveRun obj_run;
    obj_run.spectrum = spectrum;
    obj_run.mu = config.mu_for(n);
    const RegularizedObjective objective(discretize(spectrum, n), obj_run.mu, *problem.train);
    obj_run.reference = solve_reference(objective, {}, obj_run.reference_certified);
    const std::vector<std::size_t> reference_order = argsort_losses(problem.train->losses(obj_run.reference.w)).order;

    for (Algorithm a : config.algorithms) obj_run.choices.push_back(grid_search(config, objective, spectrum, a, threads));

    const std::size_t seeds = config.seeds.size();
    obj_run.runs.resize(config.algorithms.size() * seeds);
    parallel_for(obj_run.runs.size(), threads, [&](std::size_t task) {
      const std::size_t a = task / seeds, s = task % seeds;
      OptimizerConfig oc = make_optimizer_config(config, config.algorithms[a], obj_run.choices[a].eta,
                                                 config.seeds[s], n);
      oc.reference_order = reference_order;
      obj_run.runs[task] = run_optimizer(objective, spectrum, oc);
    });

    // The reference has to dominate every iterate. If a run found a lower
    // value, restart the solver from there and keep the lowest value seen.
    const RunRecord* lowest = nullptr;
    for (const RunRecord& r : obj_run.runs)
      if (!r.diverged && !r.best_w.empty() && (!lowest || r.best_objective < lowest->best_objective)) lowest = &r;
    if (lowest && lowest->best_objective < obj_run.reference.value) {
      bool certified = false;
      ReferenceResult again = solve_reference(objective, lowest->best_w, certified);
      if (again.value < obj_run.reference.value) {
        obj_run.reference = std::move(again);
        obj_run.reference_certified = certified;
      }
      if (lowest->best_objective < obj_run.reference.value) {
        log_warning("an iterate beat the reference solution for " + spectrum.label() + "; using it as w*");
        obj_run.reference.w = lowest->best_w;
        obj_run.reference.value = lowest->best_objective;
        obj_run.reference_certified = false;
      }
    }
    for (const RunRecord& r : obj_run.runs) obj_run.gaps.push_back(gap_curve(r, obj_run.reference.value));
    result.objectives.push_back(std::move(obj_run));
  }
  return result;
}

std::size_t emit_plot_data(std::span<const PlotCurve> curves, std::ostream& out) {
  out << "objective,algorithm,seed,pass,gap\n";
  std::size_t rows = 0;
  for (const PlotCurve& c : curves) {
    for (std::size_t p = 1; p < c.gaps.size(); ++p) {
      out << c.objective << ',' << c.algorithm << ',' << c.seed << ',' << p << ',' << format_number(c.gaps[p]) << '\n';
      ++rows;
    }
  }
  return rows;
}

void write_experiment(const ExperimentConfig& config, const ExperimentResult& result,
                      const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<PlotCurve> curves;
  std::ostringstream timing;
  timing << "file,pass,wall_seconds\n";
  json summary;
  summary["dataset"] = result.dataset;
  summary["config"] = config.name;
  summary["objectives"] = json::array();
  const std::size_t seeds = config.seeds.size();
  for (const ObjectiveRun& obj : result.objectives) {
    json entry;
    entry["spectrum"] = to_json(obj.spectrum);
    entry["mu"] = obj.mu;
    entry["reference_value"] = json_number(obj.reference.value);
    entry["reference_lower_bound"] = json_number(obj.reference.lower_bound);
    entry["reference_certified"] = obj.reference_certified;
    entry["algorithms"] = json::array();
    for (std::size_t a = 0; a < obj.choices.size(); ++a) {
      const GridChoice& choice = obj.choices[a];
      json alg;
      alg["name"] = algorithm_name(choice.algorithm);
      alg["learning_rate"] = choice.eta;
      alg["grid"] = json::array();
      for (const GridPoint& p : choice.points) alg["grid"].push_back({{"eta", p.eta}, {"score", json_number(p.score)}});
      alg["final_gap"] = json::array();
      for (std::size_t s = 0; s < seeds; ++s) {
        const std::size_t k = a * seeds + s;
        const RunRecord& run = obj.runs[k];
        const std::string file = run_file_name(result.dataset, obj.spectrum.label(), algorithm_name(choice.algorithm),
                                               config.seeds[s]);
        write_text(out_dir / file, run_jsonl(run, obj.gaps[k]));
        alg["final_gap"].push_back(json_number(obj.gaps[k].empty() ? kInf : obj.gaps[k].back()));
        curves.push_back({obj.spectrum.label(), algorithm_name(choice.algorithm), config.seeds[s], obj.gaps[k]});
        for (const MeasurementRow& row : run.rows) timing << file << ',' << row.pass << ',' << row.wall_seconds << '\n';
      }
      entry["algorithms"].push_back(alg);
    }
    summary["objectives"].push_back(entry);
  }
  std::ostringstream gaps;
  emit_plot_data(curves, gaps);
  write_text(out_dir / "gaps.csv", gaps.str());
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
  if (config.record_timing) write_text(out_dir / "timing.csv", timing.str());
}

// ---------------------------------------------------------------------------

double best_permutation_accuracy(const KMeansLoss& model, std::span<const double> centers, const Dataset& data) {
  const std::size_t k = model.clusters();
  if (k > 8) throw InvalidParameter("label matching is limited to k <= 8");
  std::vector<std::size_t> assigned;
  std::vector<int> truth;
  for (std::size_t i = 0; i < data.n; ++i) {
    if (i < data.labels.size() && data.labels[i] >= 0) {
      assigned.push_back(model.assign(centers, data.row(i)));
      truth.push_back(data.labels[i]);
    }
  }
  if (truth.empty()) return 0.0;
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += perm[assigned[i]] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

std::vector<ClusteringRun> run_clustering(const ExperimentConfig& config, std::size_t threads) {
  if (config.loss != LossKind::KMeans) throw ConfigError("cluster needs loss = kmeans");
  if (config.clusters > 8) throw ConfigError("cluster supports at most 8 clusters");
  const std::size_t seeds = config.seeds.size();
  std::vector<double> etas;
  for (const Spectrum& spectrum : config.spectra) {
    if (config.lr_grid.size() == 1) {
      etas.push_back(config.lr_grid.front());
      continue;
    }
    ExperimentConfig first = config;
    first.dataset.seed = config.seeds.front();
    const Problem problem = build_problem(first);
    const std::size_t n = problem.train->size();
    const RegularizedObjective objective(discretize(spectrum, n), config.mu_for(n), *problem.train);
    etas.push_back(grid_search(config, objective, spectrum, Algorithm::Sgd, threads).eta);
  }

  std::vector<ClusteringRun> runs(config.spectra.size() * seeds);
  parallel_for(runs.size(), threads, [&](std::size_t task) {
    const std::size_t sp = task / seeds, s = task % seeds;
    ExperimentConfig local = config;
    local.dataset.seed = config.seeds[s];
    const Problem problem = build_problem(local);
    const std::size_t n = problem.train->size();
    const Spectrum& spectrum = config.spectra[sp];
    const RegularizedObjective objective(discretize(spectrum, n), config.mu_for(n), *problem.train);
    const OptimizerConfig oc = make_optimizer_config(config, Algorithm::Sgd, etas[sp], config.seeds[s], n);
    const RunRecord record = run_optimizer(objective, spectrum, oc);
    const auto& model = static_cast<const KMeansLoss&>(*problem.train);
    ClusteringRun& out = runs[task];
    out.spectrum = spectrum;
    out.seed = config.seeds[s];
    out.eta = etas[sp];
    out.dim = problem.data.train.d;
    out.centers = record.final_w;
    out.train_objective = record.final_objective();
    out.train_accuracy = best_permutation_accuracy(model, out.centers, problem.data.train);
    out.test_accuracy = best_permutation_accuracy(model, out.centers, problem.data.test);
  });
  return runs;
}

void write_clustering(const std::vector<ClusteringRun>& runs, const std::filesystem::path& out_dir) {
  std::ostringstream acc, centers;
  acc << "spectrum,seed,learning_rate,train_objective,train_accuracy,test_accuracy\n";
  centers << "spectrum,seed,center,coordinate,value\n";
  for (const ClusteringRun& r : runs) {
    acc << r.spectrum.label() << ',' << r.seed << ',' << format_number(r.eta) << ','
        << format_number(r.train_objective) << ',' << format_number(r.train_accuracy) << ','
        << format_number(r.test_accuracy) << '\n';
    const std::size_t d = std::max<std::size_t>(r.dim, 1);
    for (std::size_t j = 0; j < r.centers.size(); ++j)
      centers << r.spectrum.label() << ',' << r.seed << ',' << j / d << ',' << j % d << ','
              << format_number(r.centers[j]) << '\n';
  }
  write_text(out_dir / "clustering_accuracy.csv", acc.str());
  write_text(out_dir / "clustering_centers.csv", centers.str());
}

// ---------------------------------------------------------------------------

std::vector<SensitivityResult> run_sensitivity(const ExperimentConfig& config, std::size_t threads) {
  const Problem problem = build_problem(config);
  const std::size_t n = problem.train->size();
  std::vector<SensitivityResult> out;
  for (const Spectrum& spectrum : config.spectra) {
    const RegularizedObjective objective(discretize(spectrum, n), config.mu_for(n), *problem.train);
    SensitivityResult r;
    r.spectrum = spectrum;
    r.eta = config.lr_grid.size() == 1
                ? config.lr_grid.front()
                : grid_search(config, objective, spectrum, Algorithm::LsvrgUniform, threads).eta;
    OptimizerConfig oc = make_optimizer_config(config, Algorithm::LsvrgUniform, r.eta, config.seeds.front(), n);
    oc.track_permutations = true;
    r.run = run_optimizer(objective, spectrum, oc);
    r.cells = sorting_sensitivity(r.run.checkpoint_orders);
    out.push_back(std::move(r));
  }
  return out;
}

void write_sensitivity(const std::vector<SensitivityResult>& results, const std::filesystem::path& out_dir) {
  std::ostringstream heat, per_epoch;
  heat << "spectrum,epoch,index,disagreement\n";
  per_epoch << "spectrum,epoch,disagreements\n";
  for (const SensitivityResult& r : results) {
    std::vector<long> totals;
    for (const SensitivityCell& c : r.cells) {
      heat << r.spectrum.label() << ',' << c.epoch << ',' << c.position << ',' << c.disagreement << '\n';
      if (totals.size() <= c.epoch) totals.resize(c.epoch + 1, 0);
      totals[c.epoch] += c.disagreement;
    }
    for (std::size_t e = 0; e < totals.size(); ++e) per_epoch << r.spectrum.label() << ',' << e << ',' << totals[e] << '\n';
  }
  write_text(out_dir / "sensitivity_heatmap.csv", heat.str());
  write_text(out_dir / "sensitivity_epochs.csv", per_epoch.str());
}

std::vector<QuantileDiffResult> run_quantile_diff(const ExperimentConfig& config) {
  const Problem problem = build_problem(config);
  const std::size_t n = problem.train->size();
  const double mu = config.mu_for(n);
  if (mu <= 0.0) throw ConfigError("quantile-diff needs mu > 0");
  std::vector<double> grid = config.quantile_grid;
  if (grid.empty())
    for (int k = 10; k <= 20; ++k) grid.push_back(k / 20.0);

  bool certified = false;
  const RegularizedObjective erm(SigmaWeights::uniform(n), mu, *problem.train);
  const std::vector<double> w_erm = solve_reference(erm, {}, certified).w;
  const std::vector<double> erm_train = problem.train->losses(w_erm), erm_test = problem.test->losses(w_erm);

  std::vector<QuantileDiffResult> out;
  for (const Spectrum& spectrum : config.spectra) {
    const RegularizedObjective lrm(discretize(spectrum, n), mu, *problem.train);
    const std::vector<double> w = solve_reference(lrm, {}, certified).w;
    QuantileDiffResult r;
    r.spectrum = spectrum;
    r.p_grid = grid;
    r.train_diff = quantile_difference(erm_train, problem.train->losses(w), grid, config.normalize_quantiles);
    r.test_diff = quantile_difference(erm_test, problem.test->losses(w), grid, config.normalize_quantiles);
    out.push_back(std::move(r));
  }
  return out;
}

void write_quantile_diff(const std::vector<QuantileDiffResult>& results, const std::filesystem::path& out_dir) {
  std::ostringstream csv;
  csv << "spectrum,p,train_diff,test_diff\n";
  for (const QuantileDiffResult& r : results)
    for (std::size_t k = 0; k < r.p_grid.size(); ++k)
      csv << r.spectrum.label() << ',' << format_number(r.p_grid[k]) << ',' << format_number(r.train_diff[k]) << ','
          << format_number(r.test_diff[k]) << '\n';
  write_text(out_dir / "quantile_diff.csv", csv.str());
}

}  // namespace lrisk
