#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lrisk {

enum class Split { Train, Test, Full };

// Row-major feature matrix plus optional targets.
//
// Regression datasets carry real targets. Classification datasets carry
// class indices 0..C-1 in `classes`. Clustering datasets carry the generating
// cluster in `labels` (-1 marks an outlier) and no targets.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> features;
  std::vector<double> targets;
  std::vector<int> classes;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::string target_name;
  Split split = Split::Full;

  std::span<const double> row(std::size_t i) const { return {features.data() + i * d, d}; }
  std::span<double> row(std::size_t i) { return {features.data() + i * d, d}; }

  // Subset of rows in the given order; metadata is carried over.
  Dataset select(std::span<const std::size_t> rows) const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

struct StandardizationReport {
  std::vector<std::string> dropped_columns;
};

// Centers and scales every feature column to mean 0 and population variance
// 1, dropping constant columns. Regression targets are standardized too when
// `include_targets` is set. Applying it twice is a no-op up to rounding.
StandardizationReport standardize(Dataset& data, bool include_targets);

// Shuffles rows with the given seed and puts ceil(0.2 n) of them in the test
// split, the rest in the train split.
SplitDataset train_test_split(const Dataset& data, std::uint64_t seed);

// y = w*^T x + eps with x, w* ~ N(0, I_d), eps ~ N(0, 1); raw, not standardized.
Dataset simulated_regression(std::size_t n, std::size_t d, std::uint64_t seed);

// The simulated benchmark: simulated_regression, standardized, split 80/20.
SplitDataset generate_simulated(std::size_t n = 1000, std::size_t d = 10, std::uint64_t seed = 0);

struct ClusterLayout {
  std::vector<std::array<double, 2>> centers{{-3.0, 0.0}, {0.0, 1.0}, {3.0, 0.0}};
  std::size_t points_per_cluster = 100;
  double cluster_variance = 0.1;
  std::array<double, 2> outlier_center{-1.0, -5.0};
  std::size_t outliers = 100;
  double outlier_variance = 5.0;
  std::size_t test_points_per_cluster = 100;
};

// Train split: inliers followed by outliers. Test split: inliers only.
SplitDataset generate_gaussian_clusters(const ClusterLayout& layout = {}, std::uint64_t seed = 0);

enum class TargetKind { Regression, Classification, None };

struct CsvOptions {
  std::string target_column;  // empty: last column
  TargetKind target_kind = TargetKind::Regression;
  std::uint64_t split_seed = 0;
};

struct LoadedCsv {
  SplitDataset data;
  StandardizationReport report;
};

// Reads a UTF-8 CSV with a header row and numeric cells, standardizes it and
// splits it 80/20.
LoadedCsv load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

// Parses CSV text without standardizing or splitting.
Dataset parse_csv(const std::string& text, const CsvOptions& options = {});

void write_csv(const Dataset& data, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Loss models

class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::size_t size() const noexcept = 0;
  virtual std::size_t dim() const noexcept = 0;
  virtual bool convex() const noexcept = 0;
  virtual std::string name() const = 0;

  virtual double loss(std::span<const double> params, std::size_t i) const = 0;

  // out += scale * grad l_i(params); returns l_i(params).
  virtual double add_gradient(std::span<const double> params, std::size_t i, double scale,
                              std::span<double> out) const = 0;

  std::vector<double> losses(std::span<const double> params) const;
  std::pair<double, std::vector<double>> loss_and_grad(std::span<const double> params,
                                                       std::size_t i) const;

 protected:
  void check_index(std::size_t i) const;
};

// l_i(w) = 0.5 (y_i - w^T x_i)^2
class SquaredLoss final : public LossModel {
 public:
  explicit SquaredLoss(Dataset data);
  std::size_t size() const noexcept override { return data_.n; }
  std::size_t dim() const noexcept override { return data_.d; }
  bool convex() const noexcept override { return true; }
  std::string name() const override { return "squared"; }
  double loss(std::span<const double> w, std::size_t i) const override;
  double add_gradient(std::span<const double> w, std::size_t i, double scale,
                      std::span<double> out) const override;
  const Dataset& data() const noexcept { return data_; }

 private:
  Dataset data_;
};

// Negative log-likelihood of the true class under a softmax linear model.
// Parameters are C blocks of d weights (block c scores class c).
class MultinomialLogistic final : public LossModel {
 public:
  MultinomialLogistic(Dataset data, std::size_t num_classes);
  std::size_t size() const noexcept override { return data_.n; }
  std::size_t dim() const noexcept override { return data_.d * classes_; }
  bool convex() const noexcept override { return true; }
  std::string name() const override { return "logistic"; }
  double loss(std::span<const double> w, std::size_t i) const override;
  double add_gradient(std::span<const double> w, std::size_t i, double scale,
                      std::span<double> out) const override;
  std::size_t num_classes() const noexcept { return classes_; }

 private:
  void scores(std::span<const double> w, std::size_t i, std::span<double> out) const;

  Dataset data_;
  std::size_t classes_;
};

// l_i(C) = min_j ||x_i - c_j||^2. Parameters are k blocks of d center
// coordinates. Ties go to the lowest center index. Not convex.
class KMeansLoss final : public LossModel {
 public:
  KMeansLoss(Dataset data, std::size_t k);
  std::size_t size() const noexcept override { return data_.n; }
  std::size_t dim() const noexcept override { return data_.d * k_; }
  bool convex() const noexcept override { return false; }
  std::string name() const override { return "kmeans"; }
  double loss(std::span<const double> centers, std::size_t i) const override;
  double add_gradient(std::span<const double> centers, std::size_t i, double scale,
                      std::span<double> out) const override;
  std::size_t clusters() const noexcept { return k_; }
  std::size_t assign(std::span<const double> centers, std::span<const double> x) const;

 private:
  Dataset data_;
  std::size_t k_;
};

}  // namespace lrisk
