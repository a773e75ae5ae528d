#include "lrisk/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lrisk {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

nlohmann::json json_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

std::string run_file_name(const std::string& dataset, const std::string& objective, const std::string& algorithm,
                          std::uint64_t seed) {
  return dataset + "_" + objective + "_" + algorithm + "_" + std::to_string(seed) + ".jsonl";
}

std::string run_jsonl(const RunRecord& record, std::span<const double> gaps) {
  std::string out;
  for (std::size_t k = 0; k < record.rows.size(); ++k) {
    const MeasurementRow& row = record.rows[k];
    nlohmann::json j;
    j["pass"] = row.pass;
    j["passes"] = json_number(row.pass_count);
    j["objective"] = json_number(row.objective);
    j["averaged_objective"] = json_number(row.averaged_objective);
    j["gap"] = k < gaps.size() ? json_number(gaps[k]) : nlohmann::json(nullptr);
    if (row.disagreement >= 0) j["disagreement"] = row.disagreement;
    out += j.dump();
    out += '\n';
  }
  nlohmann::json summary;
  summary["algorithm"] = algorithm_name(record.config.algorithm);
  summary["seed"] = record.config.seed;
  summary["learning_rate"] = record.config.learning_rate;
  summary["diverged"] = record.diverged;
  summary["steps"] = record.steps;
  summary["gradient_evaluations"] = record.gradient_evaluations;
  summary["final_objective"] = json_number(record.final_objective());
  summary["best_objective"] = json_number(record.best_objective);
  out += nlohmann::json{{"summary", summary}}.dump();
  out += '\n';
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace lrisk
