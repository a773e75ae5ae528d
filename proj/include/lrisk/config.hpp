#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lrisk/data.hpp"
#include "lrisk/optimizers.hpp"
#include "lrisk/smoothing.hpp"
#include "lrisk/spectra.hpp"

namespace lrisk {

enum class DatasetSource { Simulated, Clusters, Csv };
enum class LossKind { Squared, Logistic, KMeans };

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

struct DatasetSpec {
  DatasetSource source = DatasetSource::Simulated;
  std::size_t n = 1000;  // simulated: total rows before the split
  std::size_t d = 10;
  std::uint64_t seed = 0;
  std::filesystem::path csv_path;
  std::string target_column;
  ClusterLayout layout;
  std::string name() const;  // "simulated", "clusters" or the CSV file stem
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  LossKind loss = LossKind::Squared;
  std::vector<Spectrum> spectra{Spectrum::extremile(2.0)};
  // mu = mu_scale / n_train unless mu is set explicitly.
  double mu_scale = 1.0;
  std::optional<double> mu;
  std::vector<Algorithm> algorithms{Algorithm::Sgd, Algorithm::Srda, Algorithm::LsvrgUniform};
  std::vector<double> lr_grid{3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0, 3.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t batch_size = 64;
  std::size_t epoch_length = 0;  // 0 means n
  double checkpoint_prob = 0.0;
  std::size_t max_passes = 64;
  std::size_t pass_size = 0;  // gradient evaluations per pass; 0 means n
  std::optional<SmoothingConfig> smoothing;
  bool smoothing_per_n = false;  // nu is multiplied by n_train
  std::size_t clusters = 3;
  std::vector<double> quantile_grid;  // empty: 0.5, 0.55, ..., 1
  bool normalize_quantiles = false;
  bool record_timing = false;

  // Throws ConfigError.
  void validate() const;
  double mu_for(std::size_t n_train) const;
  std::optional<SmoothingConfig> smoothing_for(std::size_t n_train) const;
};

// One `key = value` per line, `#` starts a comment. Values are JSON literals
// (numbers, booleans, strings, arrays, objects) or bare words, which are read
// as strings. Unknown or repeated keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Renders the config in the same grammar; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& config);

}  // namespace lrisk
