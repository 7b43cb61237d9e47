// SPDX-License-Identifier: Apache-2.0
//
// Minimal CSV and file helpers shared by the exporters.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gaitloop::csv {

/// Shortest decimal form that parses back to the same double.
std::string format(double v);

/// Splits one line on commas; no quoting support (none of our files need it).
std::vector<std::string_view> split(std::string_view line);

/// Parses a full field as double; false on trailing garbage or empty input.
bool parse_double(std::string_view field, double& out);

/// Joins values with commas.
std::string join(const std::vector<std::string>& fields);

/// Writes `contents` to `path` through a temporary file and rename.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

/// Reads a whole file; throws IoError.
std::string read_file(const std::filesystem::path& path);

}  // namespace gaitloop::csv
