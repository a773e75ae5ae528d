#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lrisk/analysis.hpp"
#include "lrisk/config.hpp"
#include "lrisk/errors.hpp"
#include "lrisk/experiment.hpp"
#include "lrisk/io.hpp"
#include "lrisk/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lrisk;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAllDiverged = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 1;
};

ExperimentConfig load(const Common& common) {
  ExperimentConfig config = common.config_path.empty() ? ExperimentConfig{} : load_config(common.config_path);
  if (common.seed) config.seeds = {*common.seed};
  config.validate();
  return config;
}

void write_dataset(const ExperimentConfig& config, const fs::path& out) {
  const Problem problem = build_problem(config);
  const std::string name = config.dataset.name();
  fs::create_directories(out);
  write_csv(problem.data.train, out / (name + "_train.csv"));
  write_csv(problem.data.test, out / (name + "_test.csv"));
  std::cout << "wrote " << problem.data.train.n << " train and " << problem.data.test.n << " test rows to "
            << out.string() << "\n";
}

int cmd_gen_data(const Common& common) {
  ExperimentConfig config = load(common);
  if (common.seed) config.dataset.seed = *common.seed;
  write_dataset(config, common.out);
  return kExitOk;
}

int cmd_run(const Common& common) {
  const ExperimentConfig config = load(common);
  const ExperimentResult result = run_experiment(config, common.threads);
  write_experiment(config, result, common.out);
  for (const ObjectiveRun& obj : result.objectives) {
    std::cout << obj.spectrum.label() << ": reference " << format_number(obj.reference.value)
              << (obj.reference_certified ? "" : " (not certified)") << "\n";
    const std::size_t seeds = config.seeds.size();
    for (std::size_t a = 0; a < obj.choices.size(); ++a) {
      std::cout << "  " << algorithm_name(obj.choices[a].algorithm) << " eta " << format_number(obj.choices[a].eta)
                << " final gaps";
      for (std::size_t s = 0; s < seeds; ++s) std::cout << ' ' << format_number(obj.gaps[a * seeds + s].back());
      std::cout << "\n";
    }
  }
  return kExitOk;
}

int cmd_grid_search(const Common& common) {
  const ExperimentConfig config = load(common);
  const auto results = grid_search(config, common.threads);
  json out = json::array();
  for (const GridSearchResult& r : results) {
    json entry{{"spectrum", to_json(r.spectrum)}, {"algorithms", json::array()}};
    for (const GridChoice& c : r.choices) {
      json alg{{"name", algorithm_name(c.algorithm)}, {"learning_rate", c.eta}, {"grid", json::array()}};
      for (const GridPoint& p : c.points) alg["grid"].push_back({{"eta", p.eta}, {"score", json_number(p.score)}});
      entry["algorithms"].push_back(alg);
      std::cout << r.spectrum.label() << " " << algorithm_name(c.algorithm) << " eta " << format_number(c.eta) << "\n";
    }
    out.push_back(entry);
  }
  write_text(fs::path(common.out) / "grid_search.json", out.dump(2) + "\n");
  return kExitOk;
}

int cmd_cluster(const Common& common) {
  const ExperimentConfig config = load(common);
  const auto runs = run_clustering(config, common.threads);
  write_clustering(runs, common.out);
  for (const ClusteringRun& r : runs)
    std::cout << r.spectrum.label() << " seed " << r.seed << " test accuracy " << format_number(r.test_accuracy)
              << "\n";
  return kExitOk;
}

int cmd_bias_check(const Common& common, std::size_t n_min, std::size_t n_max, std::size_t vectors) {
  ExperimentConfig config = load(common);
  if (common.config_path.empty())
    config.spectra = {Spectrum::superquantile(0.5), Spectrum::extremile(2.0), Spectrum::esrm(1.0)};
  if (n_min < 1 || n_max < n_min) throw ConfigError("need 1 <= n-min <= n-max");
  CounterRng root(config.seeds.front());
  std::ostringstream csv;
  csv << "spectrum,n,m,vector,bias,bound\n";
  std::size_t cases = 0, violations = 0;
  double worst_ratio = 0.0;
  for (std::size_t sp = 0; sp < config.spectra.size(); ++sp) {
    const Spectrum& spectrum = config.spectra[sp];
    for (std::size_t n = n_min; n <= n_max; ++n) {
      for (std::size_t v = 0; v < vectors; ++v) {
        CounterRng rng = root.split(sp).split(n).split(v);
        std::vector<double> losses(n);
        for (double& l : losses) l = rng.exponential(1.0);
        for (std::size_t m = 1; m <= n; ++m) {
          const BiasReport r = exhaustive_bias(spectrum, losses, m);
          ++cases;
          if (r.bias > r.bound + 1e-9) ++violations;
          if (r.bound > 0.0) worst_ratio = std::max(worst_ratio, r.bias / r.bound);
          csv << spectrum.label() << ',' << n << ',' << m << ',' << v << ',' << format_number(r.bias) << ','
              << format_number(r.bound) << '\n';
        }
      }
    }
  }
  write_text(fs::path(common.out) / "bias.csv", csv.str());
  const json summary{{"cases", cases}, {"violations", violations}, {"worst_bias_to_bound", worst_ratio}};
  write_text(fs::path(common.out) / "bias_summary.json", summary.dump(2) + "\n");
  std::cout << cases << " cases, " << violations << " violations, worst bias/bound " << format_number(worst_ratio)
            << "\n";
  return violations == 0 ? kExitOk : kExitOther;
}

int cmd_consistency(const Common& common, std::size_t reps, std::size_t doublings, double rate) {
  ExperimentConfig config = load(common);
  const Spectrum spectrum = common.config_path.empty() ? Spectrum::superquantile(0.5) : config.spectra.front();
  std::vector<std::size_t> sizes;
  for (std::size_t j = 0; j < doublings; ++j) sizes.push_back(std::size_t{100} << j);
  const ConsistencyReport r =
      consistency_mse(spectrum, Population::exponential(rate), sizes, reps, config.seeds.front(), common.threads);
  std::ostringstream csv;
  csv << "n,mse\n";
  for (std::size_t k = 0; k < r.sizes.size(); ++k) csv << r.sizes[k] << ',' << format_number(r.mse[k]) << '\n';
  write_text(fs::path(common.out) / "consistency.csv", csv.str());
  const json summary{{"spectrum", to_json(spectrum)}, {"truth", r.truth}, {"slope", r.slope},
                     {"intercept", r.intercept}, {"reps", reps}};
  write_text(fs::path(common.out) / "consistency_summary.json", summary.dump(2) + "\n");
  std::cout << "truth " << format_number(r.truth) << ", log-log slope " << format_number(r.slope) << "\n";
  return kExitOk;
}

int cmd_sensitivity(const Common& common) {
  const ExperimentConfig config = load(common);
  const auto results = run_sensitivity(config, common.threads);
  write_sensitivity(results, common.out);
  for (const SensitivityResult& r : results)
    std::cout << r.spectrum.label() << ": " << r.run.checkpoint_orders.size() << " checkpoints, eta "
              << format_number(r.eta) << "\n";
  return kExitOk;
}

int cmd_quantile_diff(const Common& common) {
  const ExperimentConfig config = load(common);
  const auto results = run_quantile_diff(config);
  write_quantile_diff(results, common.out);
  for (const QuantileDiffResult& r : results)
    std::cout << r.spectrum.label() << ": test difference at p=" << format_number(r.p_grid.back()) << " is "
              << format_number(r.test_diff.back()) << "\n";
  return kExitOk;
}

int cmd_pav_check(const Common& common, std::size_t instances) {
  const std::uint64_t seed = common.seed.value_or(1);
  const PavCheckReport r = pav_check(instances, seed);
  const json summary{{"instances", r.instances},
                     {"failures", r.failures},
                     {"worst_dual_gap_ratio", r.worst_dual_gap_ratio},
                     {"worst_feasibility_slack", r.worst_feasibility_slack},
                     {"worst_sandwich_violation", r.worst_sandwich_violation}};
  write_text(fs::path(common.out) / "pav_check.json", summary.dump(2) + "\n");
  std::cout << r.instances << " instances, " << r.failures << " failures\n";
  return r.passed() ? kExitOk : kExitOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral risk minimization toolkit"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "Experiment config file");
  app.add_option("--seed", common.seed, "Override the seed list with a single seed");
  app.add_option("--out", common.out, "Output directory");
  app.add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.fallthrough();

  auto* gen = app.add_subcommand("gen-data", "Write the configured dataset as train/test CSV files");
  auto* run = app.add_subcommand("run", "Tune, run every algorithm and seed, write trajectories and gap curves");
  auto* grid = app.add_subcommand("grid-search", "Select a learning rate per algorithm");
  auto* cluster = app.add_subcommand("cluster", "Robust k-means by minibatch SGD");
  auto* bias = app.add_subcommand("bias-check", "Exhaustive minibatch bias against its bound");
  std::size_t n_min = 4, n_max = 10, vectors = 50;
  bias->add_option("--n-min", n_min);
  bias->add_option("--n-max", n_max);
  bias->add_option("--vectors", vectors);
  auto* consistency = app.add_subcommand("consistency-check", "Monte-Carlo MSE decay of the empirical L-risk");
  std::size_t reps = 2000, doublings = 8;
  double rate = 1.0;
  consistency->add_option("--reps", reps);
  consistency->add_option("--sizes", doublings, "Number of sizes 100, 200, 400, ...");
  consistency->add_option("--rate", rate, "Exponential rate");
  auto* sensitivity = app.add_subcommand("sensitivity", "Sorting disagreement across LSVRG checkpoints");
  auto* qdiff = app.add_subcommand("quantile-diff", "Loss quantile differences between ERM and L-risk solutions");
  auto* pav = app.add_subcommand("pav-check", "Randomized audit of the smoothed oracle");
  std::size_t instances = 10000;
  pav->add_option("--instances", instances);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*run) return cmd_run(common);
    if (*grid) return cmd_grid_search(common);
    if (*cluster) return cmd_cluster(common);
    if (*bias) return cmd_bias_check(common, n_min, n_max, vectors);
    if (*consistency) return cmd_consistency(common, reps, doublings, rate);
    if (*sensitivity) return cmd_sensitivity(common);
    if (*qdiff) return cmd_quantile_diff(common);
    if (*pav) return cmd_pav_check(common, instances);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const AllDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAllDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
