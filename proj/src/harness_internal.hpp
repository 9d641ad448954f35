#pragma once

#include <string>

#include "cdrinv/harness.hpp"

namespace cdrinv::detail {

/// Dispatches to the experiment body; fills checks, files and metrics.
void run_named(const ExperimentConfig& c, ResultBundle& b);

/// Absolute path for `name` inside the bundle, recorded in b.files.
std::string bundle_file(ResultBundle& b, const std::string& name);

void add_check(ResultBundle& b, const std::string& name, bool pass, const std::string& detail);

/// Shortest round-trip formatting for check details.
std::string num(double v);

}  // namespace cdrinv::detail
