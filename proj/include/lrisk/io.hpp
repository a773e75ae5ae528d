#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"
#include "lrisk/optimizers.hpp"

namespace lrisk {

// %.17g, with "inf", "-inf" and "nan" spelled out.
std::string format_number(double x);

// Finite numbers as is, anything else as null.
nlohmann::json json_number(double x);

// {dataset}_{objective}_{algorithm}_{seed}.jsonl
std::string run_file_name(const std::string& dataset, const std::string& objective, const std::string& algorithm,
                          std::uint64_t seed);

// One JSON object per measurement row: pass, passes, objective,
// averaged_objective, gap, disagreement. A final line holds the run summary.
// Wall-clock time is never written here.
std::string run_jsonl(const RunRecord& record, std::span<const double> gaps);

// Writes the whole string, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

std::string read_text(const std::filesystem::path& path);

}  // namespace lrisk
