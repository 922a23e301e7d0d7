#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace phylofunc::csv {

/// Shortest decimal text that parses back to exactly `value`.
std::string FormatDouble(double value);
double ParseDouble(std::string_view text);

using Row = std::vector<std::string>;

/// Comma-separated, no quoting. Blank lines are skipped.
std::vector<Row> Parse(std::string_view text);
std::string JoinRow(const Row& row);

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view contents);

}  // namespace phylofunc::csv
