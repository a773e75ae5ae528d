#pragma once

#include <string_view>

namespace lrisk {

// Warnings go to stderr unless silenced (tests and benchmarks silence them).
void log_warning(std::string_view message);
void set_warnings_enabled(bool enabled);
bool warnings_enabled();

}  // namespace lrisk
