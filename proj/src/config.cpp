#include "lrisk/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lrisk/errors.hpp"

namespace lrisk {

using nlohmann::json;

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::Squared: return "squared";
    case LossKind::Logistic: return "logistic";
    case LossKind::KMeans: return "kmeans";
  }
  return "?";
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "squared") return LossKind::Squared;
  if (name == "logistic") return LossKind::Logistic;
  if (name == "kmeans") return LossKind::KMeans;
  throw ConfigError("unknown loss '" + name + "'");
}

std::string DatasetSpec::name() const {
  switch (source) {
    case DatasetSource::Simulated: return "simulated";
    case DatasetSource::Clusters: return "clusters";
    case DatasetSource::Csv: return csv_path.stem().string();
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (spectra.empty()) throw ConfigError("at least one spectrum is required");
  if (algorithms.empty()) throw ConfigError("at least one algorithm is required");
  for (Algorithm a : algorithms)
    if (a == Algorithm::QSvrg || a == Algorithm::ReferenceFullBatch)
      throw ConfigError("algorithm '" + algorithm_name(a) + "' cannot be used in an experiment list");
  for (Algorithm a : algorithms)
    if (a == Algorithm::LsvrgSmoothed && !smoothing) throw ConfigError("lsvrg_smoothed needs smoothing_nu");
  if (lr_grid.empty()) throw ConfigError("lr_grid must not be empty");
  for (double eta : lr_grid)
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("lr_grid entries must be positive and finite");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("seeds must be distinct");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (max_passes == 0) throw ConfigError("max_passes must be at least 1");
  if (!(checkpoint_prob >= 0.0 && checkpoint_prob <= 1.0)) throw ConfigError("checkpoint_prob must lie in [0, 1]");
  if (!(mu_scale >= 0.0) || !std::isfinite(mu_scale)) throw ConfigError("mu_scale must be nonnegative");
  if (mu && (!(*mu >= 0.0) || !std::isfinite(*mu))) throw ConfigError("mu must be nonnegative");
  if (smoothing && !(smoothing->nu > 0.0)) throw ConfigError("smoothing_nu must be positive");
  if (clusters == 0) throw ConfigError("clusters must be at least 1");
  for (double p : quantile_grid)
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("quantile_grid entries must lie in (0, 1]");
  if (dataset.source == DatasetSource::Csv && dataset.csv_path.empty())
    throw ConfigError("dataset = csv needs csv_path");
  if (dataset.source == DatasetSource::Simulated && (dataset.n < 2 || dataset.d == 0))
    throw ConfigError("simulated dataset needs n >= 2 and d >= 1");
  if (loss == LossKind::KMeans && dataset.source == DatasetSource::Simulated)
    throw ConfigError("kmeans loss needs a clustering dataset");
}

double ExperimentConfig::mu_for(std::size_t n_train) const {
  if (mu) return *mu;
  return mu_scale / static_cast<double>(n_train);
}

std::optional<SmoothingConfig> ExperimentConfig::smoothing_for(std::size_t n_train) const {
  if (!smoothing) return std::nullopt;
  SmoothingConfig s = *smoothing;
  if (smoothing_per_n) s.nu *= static_cast<double>(n_train);
  return s;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Drops a trailing comment, leaving '#' inside JSON strings alone.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted && c == '\\') {
      ++i;
    } else if (c == '"') {
      quoted = !quoted;
    } else if (c == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

json parse_value(const std::string& raw, long line) {
  const char c = raw.front();
  const bool json_like = c == '"' || c == '[' || c == '{' || c == '-' || (c >= '0' && c <= '9') ||
                         raw == "true" || raw == "false" || raw == "null";
  if (!json_like) return raw;
  try {
    return json::parse(raw);
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(line) + ": bad value: " + e.what(), line);
  }
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + key + "' has the wrong type: " + v.dump());
  }
}

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("key '" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("key '" + key + "' must be a number");
  return v.get<double>();
}

Spectrum get_spectrum(const json& v, const std::string& key) {
  try {
    if (v.is_string()) return spectrum_from_json(json{{"kind", v.get<std::string>()}});
    return spectrum_from_json(v);
  } catch (const InvalidParameter& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

std::array<double, 2> get_point(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError("key '" + key + "' must be a pair of numbers");
  return {v[0].get<double>(), v[1].get<double>()};
}

void apply(ExperimentConfig& c, const std::string& key, const json& v) {
  if (key == "name") {
    c.name = get_as<std::string>(v, key);
  } else if (key == "dataset") {
    const auto s = get_as<std::string>(v, key);
    if (s == "simulated") c.dataset.source = DatasetSource::Simulated;
    else if (s == "clusters") c.dataset.source = DatasetSource::Clusters;
    else if (s == "csv") c.dataset.source = DatasetSource::Csv;
    else throw ConfigError("unknown dataset '" + s + "'");
  } else if (key == "dataset_n") {
    c.dataset.n = get_count(v, key);
  } else if (key == "dataset_d") {
    c.dataset.d = get_count(v, key);
  } else if (key == "dataset_seed") {
    c.dataset.seed = get_count(v, key);
  } else if (key == "csv_path") {
    c.dataset.csv_path = get_as<std::string>(v, key);
  } else if (key == "target_column") {
    c.dataset.target_column = get_as<std::string>(v, key);
  } else if (key == "cluster_centers") {
    if (!v.is_array() || v.empty()) throw ConfigError("cluster_centers must be a non-empty array of pairs");
    c.dataset.layout.centers.clear();
    for (const auto& p : v) c.dataset.layout.centers.push_back(get_point(p, key));
  } else if (key == "points_per_cluster") {
    c.dataset.layout.points_per_cluster = get_count(v, key);
  } else if (key == "test_points_per_cluster") {
    c.dataset.layout.test_points_per_cluster = get_count(v, key);
  } else if (key == "cluster_variance") {
    c.dataset.layout.cluster_variance = get_number(v, key);
  } else if (key == "outliers") {
    c.dataset.layout.outliers = get_count(v, key);
  } else if (key == "outlier_center") {
    c.dataset.layout.outlier_center = get_point(v, key);
  } else if (key == "outlier_variance") {
    c.dataset.layout.outlier_variance = get_number(v, key);
  } else if (key == "loss") {
    c.loss = loss_kind_from_name(get_as<std::string>(v, key));
  } else if (key == "spectrum") {
    c.spectra = {get_spectrum(v, key)};
  } else if (key == "spectra") {
    if (!v.is_array()) throw ConfigError("spectra must be an array");
    c.spectra.clear();
    for (const auto& s : v) c.spectra.push_back(get_spectrum(s, key));
  } else if (key == "mu") {
    c.mu = get_number(v, key);
  } else if (key == "mu_scale") {
    c.mu_scale = get_number(v, key);
  } else if (key == "algorithms") {
    if (!v.is_array()) throw ConfigError("algorithms must be an array");
    c.algorithms.clear();
    for (const auto& a : v) {
      try {
        c.algorithms.push_back(algorithm_from_name(get_as<std::string>(a, key)));
      } catch (const InvalidParameter& e) {
        throw ConfigError(e.what());
      }
    }
  } else if (key == "lr_grid") {
    c.lr_grid = get_as<std::vector<double>>(v.is_number() ? json::array({v}) : v, key);
  } else if (key == "seeds") {
    if (!v.is_array()) throw ConfigError("seeds must be an array");
    c.seeds.clear();
    for (const auto& s : v) c.seeds.push_back(get_count(s, key));
  } else if (key == "batch_size") {
    c.batch_size = get_count(v, key);
  } else if (key == "epoch_length") {
    c.epoch_length = get_count(v, key);
  } else if (key == "checkpoint_prob") {
    c.checkpoint_prob = get_number(v, key);
  } else if (key == "max_passes") {
    c.max_passes = get_count(v, key);
  } else if (key == "pass_size") {
    c.pass_size = get_count(v, key);
  } else if (key == "smoothing_nu") {
    if (!c.smoothing) c.smoothing = SmoothingConfig{};
    c.smoothing->nu = get_number(v, key);
  } else if (key == "smoothing_per_n") {
    c.smoothing_per_n = get_as<bool>(v, key);
  } else if (key == "smoothing_regularizer") {
    if (!c.smoothing) c.smoothing = SmoothingConfig{};
    const auto s = get_as<std::string>(v, key);
    if (s == "quadratic") c.smoothing->regularizer = Regularizer::Quadratic;
    else if (s == "entropic") c.smoothing->regularizer = Regularizer::Entropic;
    else throw ConfigError("unknown smoothing_regularizer '" + s + "'");
  } else if (key == "clusters") {
    c.clusters = get_count(v, key);
  } else if (key == "quantile_grid") {
    c.quantile_grid = get_as<std::vector<double>>(v, key);
  } else if (key == "normalize_quantiles") {
    c.normalize_quantiles = get_as<bool>(v, key);
  } else if (key == "record_timing") {
    c.record_timing = get_as<bool>(v, key);
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw_line;
  long line_no = 0;
  while (std::getline(in, raw_line)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ParseError("line " + std::to_string(line_no) + ": empty key or value", line_no);
    if (!seen.insert(key).second) throw ConfigError("key '" + key + "' given twice");
    apply(config, key, parse_value(value, line_no));
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream out;
  auto put = [&out](const std::string& key, const json& v) { out << key << " = " << v.dump() << '\n'; };
  put("name", c.name);
  const char* sources[] = {"simulated", "clusters", "csv"};
  put("dataset", sources[static_cast<int>(c.dataset.source)]);
  put("dataset_n", c.dataset.n);
  put("dataset_d", c.dataset.d);
  put("dataset_seed", c.dataset.seed);
  if (!c.dataset.csv_path.empty()) put("csv_path", c.dataset.csv_path.string());
  if (!c.dataset.target_column.empty()) put("target_column", c.dataset.target_column);
  json centers = json::array();
  for (const auto& p : c.dataset.layout.centers) centers.push_back({p[0], p[1]});
  put("cluster_centers", centers);
  put("points_per_cluster", c.dataset.layout.points_per_cluster);
  put("test_points_per_cluster", c.dataset.layout.test_points_per_cluster);
  put("cluster_variance", c.dataset.layout.cluster_variance);
  put("outliers", c.dataset.layout.outliers);
  put("outlier_center", {c.dataset.layout.outlier_center[0], c.dataset.layout.outlier_center[1]});
  put("outlier_variance", c.dataset.layout.outlier_variance);
  put("loss", loss_kind_name(c.loss));
  json spectra = json::array();
  for (const auto& s : c.spectra) spectra.push_back(to_json(s));
  put("spectra", spectra);
  if (c.mu) put("mu", *c.mu);
  put("mu_scale", c.mu_scale);
  json algorithms = json::array();
  for (Algorithm a : c.algorithms) algorithms.push_back(algorithm_name(a));
  put("algorithms", algorithms);
  put("lr_grid", c.lr_grid);
  put("seeds", c.seeds);
  put("batch_size", c.batch_size);
  put("epoch_length", c.epoch_length);
  put("checkpoint_prob", c.checkpoint_prob);
  put("max_passes", c.max_passes);
  put("pass_size", c.pass_size);
  if (c.smoothing) {
    put("smoothing_nu", c.smoothing->nu);
    put("smoothing_regularizer", c.smoothing->regularizer == Regularizer::Quadratic ? "quadratic" : "entropic");
  }
  put("smoothing_per_n", c.smoothing_per_n);
  put("clusters", c.clusters);
  if (!c.quantile_grid.empty()) put("quantile_grid", c.quantile_grid);
  put("normalize_quantiles", c.normalize_quantiles);
  put("record_timing", c.record_timing);
  return out.str();
}

}  // namespace lrisk
