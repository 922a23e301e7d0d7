#include "phylofunc/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "phylofunc/error.hpp"

namespace phylofunc::csv {

std::string FormatDouble(double value) {
  std::array<char, 64> buffer{};
  auto [end, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  if (ec != std::errc{}) throw InvalidInput("cannot format number");
  return {buffer.data(), end};
}

double ParseDouble(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw InvalidInput("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<Row> Parse(std::string_view text) {
  std::vector<Row> rows;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      Row row;
      std::size_t field_start = 0;
      while (true) {
        std::size_t comma = line.find(',', field_start);
        row.emplace_back(line.substr(field_start, comma == std::string_view::npos
                                                      ? std::string_view::npos
                                                      : comma - field_start));
        if (comma == std::string_view::npos) break;
        field_start = comma + 1;
      }
      rows.push_back(std::move(row));
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return rows;
}

std::string JoinRow(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out += ',';
    out += row[i];
  }
  out += '\n';
  return out;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteFile(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw InvalidInput("write failed for " + path.string());
}

}  // namespace phylofunc::csv
