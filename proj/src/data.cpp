#include "lrisk/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "lrisk/errors.hpp"
#include "lrisk/log.hpp"
#include "lrisk/rng.hpp"

namespace lrisk {

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset out;
  out.n = rows.size();
  out.d = d;
  out.feature_names = feature_names;
  out.target_name = target_name;
  out.split = split;
  out.features.reserve(rows.size() * d);
  for (std::size_t r : rows) {
    const auto x = row(r);
    out.features.insert(out.features.end(), x.begin(), x.end());
    if (!targets.empty()) out.targets.push_back(targets[r]);
    if (!classes.empty()) out.classes.push_back(classes[r]);
    if (!labels.empty()) out.labels.push_back(labels[r]);
  }
  return out;
}

StandardizationReport standardize(Dataset& data, bool include_targets) {
  StandardizationReport report;
  const std::size_t n = data.n;
  if (n == 0) return report;

  std::vector<std::size_t> keep;
  std::vector<double> means(data.d), scales(data.d);
  for (std::size_t j = 0; j < data.d; ++j) {
    double lo = data.features[j], hi = data.features[j], mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = data.features[i * data.d + j];
      if (!std::isfinite(v)) throw InvalidInput("non-finite feature value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mean += v;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = data.features[i * data.d + j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const std::string name = j < data.feature_names.size() ? data.feature_names[j] : "x" + std::to_string(j + 1);
    if (lo == hi || !(var > 0.0)) {
      report.dropped_columns.push_back(name);
      log_warning("dropping constant column '" + name + "'");
      continue;
    }
    keep.push_back(j);
    means[j] = mean;
    scales[j] = std::sqrt(var);
  }

  std::vector<double> features;
  features.reserve(n * keep.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : keep) features.push_back((data.features[i * data.d + j] - means[j]) / scales[j]);

  std::vector<std::string> names;
  if (!data.feature_names.empty())
    for (std::size_t j : keep) names.push_back(data.feature_names[j]);

  data.features = std::move(features);
  data.feature_names = std::move(names);
  data.d = keep.size();

  if (include_targets && !data.targets.empty()) {
    double mean = std::accumulate(data.targets.begin(), data.targets.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double y : data.targets) var += (y - mean) * (y - mean);
    var /= static_cast<double>(n);
    if (var > 0.0) {
      const double scale = std::sqrt(var);
      for (double& y : data.targets) y = (y - mean) / scale;
    }
  }
  return report;
}

SplitDataset train_test_split(const Dataset& data, std::uint64_t seed) {
  std::vector<std::size_t> order(data.n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed);
  for (std::size_t i = data.n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const std::size_t n_test = (data.n + 4) / 5;
  SplitDataset out;
  out.test = data.select(std::span(order).first(n_test));
  out.train = data.select(std::span(order).subspan(n_test));
  out.train.split = Split::Train;
  out.test.split = Split::Test;
  return out;
}

Dataset simulated_regression(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw InvalidParameter("simulated data needs n, d >= 1");
  CounterRng rng(seed);
  std::vector<double> w_true(d);
  for (double& w : w_true) w = rng.normal();

  Dataset data;
  data.n = n;
  data.d = d;
  data.features.resize(n * d);
  data.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = rng.normal();
      data.features[i * d + j] = x;
      y += w_true[j] * x;
    }
    data.targets[i] = y + rng.normal();
  }
  for (std::size_t j = 0; j < d; ++j) data.feature_names.push_back("x" + std::to_string(j + 1));
  data.target_name = "y";
  return data;
}

SplitDataset generate_simulated(std::size_t n, std::size_t d, std::uint64_t seed) {
  Dataset data = simulated_regression(n, d, seed);
  standardize(data, true);
  return train_test_split(data, CounterRng::mix(seed + 1));
}

SplitDataset generate_gaussian_clusters(const ClusterLayout& layout, std::uint64_t seed) {
  if (layout.centers.empty()) throw InvalidParameter("cluster layout needs at least one center");
  if (layout.cluster_variance < 0.0 || layout.outlier_variance < 0.0)
    throw InvalidParameter("cluster variances must be nonnegative");
  CounterRng rng(seed);
  const double inlier_sd = std::sqrt(layout.cluster_variance);
  const double outlier_sd = std::sqrt(layout.outlier_variance);

  auto make = [](Split split) {
    Dataset data;
    data.d = 2;
    data.feature_names = {"x1", "x2"};
    data.split = split;
    return data;
  };
  auto push = [](Dataset& data, double x, double y, int label) {
    data.features.push_back(x);
    data.features.push_back(y);
    data.labels.push_back(label);
    ++data.n;
  };

  SplitDataset out{make(Split::Train), make(Split::Test)};
  for (std::size_t c = 0; c < layout.centers.size(); ++c) {
    for (std::size_t k = 0; k < layout.points_per_cluster; ++k) {
      const double dx = rng.normal(), dy = rng.normal();
      push(out.train, layout.centers[c][0] + inlier_sd * dx, layout.centers[c][1] + inlier_sd * dy,
           static_cast<int>(c));
    }
  }
  for (std::size_t k = 0; k < layout.outliers; ++k) {
    const double dx = rng.normal(), dy = rng.normal();
    push(out.train, layout.outlier_center[0] + outlier_sd * dx, layout.outlier_center[1] + outlier_sd * dy, -1);
  }
  for (std::size_t c = 0; c < layout.centers.size(); ++c) {
    for (std::size_t k = 0; k < layout.test_points_per_cluster; ++k) {
      const double dx = rng.normal(), dy = rng.normal();
      push(out.test, layout.centers[c][0] + inlier_sd * dx, layout.centers[c][1] + inlier_sd * dy,
           static_cast<int>(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      fields.push_back(current);
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.push_back(current);
  for (auto& f : fields) {
    const auto first = f.find_first_not_of(" \t");
    const auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? std::string{} : f.substr(first, last - first + 1);
  }
  return fields;
}

bool parse_number(const std::string& cell, double& value) {
  if (cell.empty()) return false;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_numbers;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    rows.push_back(split_fields(line));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw ParseError("empty CSV input");

  const auto& header = rows.front();
  double probe = 0.0;
  if (std::all_of(header.begin(), header.end(), [&](const std::string& c) { return parse_number(c, probe); }))
    throw ParseError("CSV input has no header row", line_numbers.front());

  const std::size_t columns = header.size();
  std::size_t target = columns - 1;
  if (options.target_kind == TargetKind::None) {
    target = columns;
  } else if (!options.target_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), options.target_column);
    if (it == header.end()) throw ParseError("target column '" + options.target_column + "' not in header");
    target = static_cast<std::size_t>(it - header.begin());
  }

  Dataset data;
  data.d = target < columns ? columns - 1 : columns;
  for (std::size_t j = 0; j < columns; ++j) {
    if (j == target) data.target_name = header[j];
    else data.feature_names.push_back(header[j]);
  }

  std::vector<double> raw_targets;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    if (fields.size() != columns)
      throw ParseError("row " + std::to_string(line_numbers[r]) + " has " + std::to_string(fields.size()) +
                           " fields, expected " + std::to_string(columns),
                       line_numbers[r]);
    for (std::size_t j = 0; j < columns; ++j) {
      double value = 0.0;
      if (!parse_number(fields[j], value) || !std::isfinite(value))
        throw ParseError("non-numeric cell '" + fields[j] + "' at row " + std::to_string(line_numbers[r]) +
                             ", column " + std::to_string(j + 1),
                         line_numbers[r], static_cast<long>(j + 1));
      if (j == target) raw_targets.push_back(value);
      else data.features.push_back(value);
    }
    ++data.n;
  }

  if (options.target_kind == TargetKind::Regression) {
    data.targets = std::move(raw_targets);
  } else if (options.target_kind == TargetKind::Classification) {
    std::map<double, int> index;
    for (double y : raw_targets) {
      if (y != std::floor(y)) throw ParseError("class label " + std::to_string(y) + " is not an integer");
      index.emplace(y, 0);
    }
    int next = 0;
    for (auto& [label, id] : index) id = next++;
    for (double y : raw_targets) data.classes.push_back(index.at(y));
  }
  return data;
}

LoadedCsv load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  Dataset data = parse_csv(buffer.str(), options);
  LoadedCsv out;
  out.report = standardize(data, options.target_kind == TargetKind::Regression);
  out.data = train_test_split(data, options.split_seed);
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  out.precision(17);
  for (std::size_t j = 0; j < data.d; ++j) {
    if (j) out << ',';
    out << (j < data.feature_names.size() ? data.feature_names[j] : "x" + std::to_string(j + 1));
  }
  if (!data.targets.empty()) out << ',' << (data.target_name.empty() ? "y" : data.target_name);
  if (!data.classes.empty()) out << ',' << (data.target_name.empty() ? "class" : data.target_name);
  if (!data.labels.empty()) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto x = data.row(i);
    for (std::size_t j = 0; j < data.d; ++j) {
      if (j) out << ',';
      out << x[j];
    }
    if (!data.targets.empty()) out << ',' << data.targets[i];
    if (!data.classes.empty()) out << ',' << data.classes[i];
    if (!data.labels.empty()) out << ',' << data.labels[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Loss models

void LossModel::check_index(std::size_t i) const {
  if (i >= size()) throw DimensionError("example index " + std::to_string(i) + " out of range");
}

std::vector<double> LossModel::losses(std::span<const double> params) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = loss(params, i);
  return out;
}

std::pair<double, std::vector<double>> LossModel::loss_and_grad(std::span<const double> params,
                                                                std::size_t i) const {
  check_index(i);
  std::vector<double> grad(dim(), 0.0);
  const double value = add_gradient(params, i, 1.0, grad);
  return {value, std::move(grad)};
}

namespace {
double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}
}  // namespace

SquaredLoss::SquaredLoss(Dataset data) : data_(std::move(data)) {
  if (data_.targets.size() != data_.n) throw DimensionError("squared loss needs one target per row");
}

double SquaredLoss::loss(std::span<const double> w, std::size_t i) const {
  check_index(i);
  const double r = data_.targets[i] - dot(w, data_.row(i));
  return 0.5 * r * r;
}

double SquaredLoss::add_gradient(std::span<const double> w, std::size_t i, double scale,
                                 std::span<double> out) const {
  check_index(i);
  const auto x = data_.row(i);
  const double r = data_.targets[i] - dot(w, x);
  const double c = -scale * r;
  for (std::size_t j = 0; j < x.size(); ++j) out[j] += c * x[j];
  return 0.5 * r * r;
}

MultinomialLogistic::MultinomialLogistic(Dataset data, std::size_t num_classes)
    : data_(std::move(data)), classes_(num_classes) {
  if (classes_ < 2) throw InvalidParameter("logistic loss needs at least two classes");
  if (data_.classes.size() != data_.n) throw DimensionError("logistic loss needs one class per row");
  for (int c : data_.classes)
    if (c < 0 || static_cast<std::size_t>(c) >= classes_) throw InvalidInput("class index out of range");
}

void MultinomialLogistic::scores(std::span<const double> w, std::size_t i, std::span<double> out) const {
  const auto x = data_.row(i);
  for (std::size_t c = 0; c < classes_; ++c) out[c] = dot(w.subspan(c * data_.d, data_.d), x);
}

double MultinomialLogistic::loss(std::span<const double> w, std::size_t i) const {
  check_index(i);
  std::vector<double> s(classes_);
  scores(w, i, s);
  const double top = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - top);
  return top + std::log(z) - s[static_cast<std::size_t>(data_.classes[i])];
}

double MultinomialLogistic::add_gradient(std::span<const double> w, std::size_t i, double scale,
                                         std::span<double> out) const {
  check_index(i);
  std::vector<double> s(classes_);
  scores(w, i, s);
  const double top = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - top);
  const auto y = static_cast<std::size_t>(data_.classes[i]);
  const double value = top + std::log(z) - s[y];
  const auto x = data_.row(i);
  for (std::size_t c = 0; c < classes_; ++c) {
    const double p = std::exp(s[c] - top) / z;
    const double coef = scale * (p - (c == y ? 1.0 : 0.0));
    double* block = out.data() + c * data_.d;
    for (std::size_t j = 0; j < data_.d; ++j) block[j] += coef * x[j];
  }
  return value;
}

KMeansLoss::KMeansLoss(Dataset data, std::size_t k) : data_(std::move(data)), k_(k) {
  if (k_ == 0) throw InvalidParameter("k-means needs k >= 1");
  if (k_ > data_.n) throw InvalidParameter("k-means needs k <= n");
}

std::size_t KMeansLoss::assign(std::span<const double> centers, std::span<const double> x) const {
  std::size_t best = 0;
  double best_dist = 0.0;
  for (std::size_t c = 0; c < k_; ++c) {
    double dist = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - centers[c * data_.d + j];
      dist += diff * diff;
    }
    if (c == 0 || dist < best_dist) {
      best = c;
      best_dist = dist;
    }
  }
  return best;
}

double KMeansLoss::loss(std::span<const double> centers, std::size_t i) const {
  check_index(i);
  const auto x = data_.row(i);
  const std::size_t c = assign(centers, x);
  double dist = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - centers[c * data_.d + j];
    dist += diff * diff;
  }
  return dist;
}

double KMeansLoss::add_gradient(std::span<const double> centers, std::size_t i, double scale,
                                std::span<double> out) const {
  check_index(i);
  const auto x = data_.row(i);
  const std::size_t c = assign(centers, x);
  double dist = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = centers[c * data_.d + j] - x[j];
    dist += diff * diff;
    out[c * data_.d + j] += scale * 2.0 * diff;
  }
  return dist;
}

}  // namespace lrisk
