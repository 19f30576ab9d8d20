#pragma once

// CSV dataset format: header row, one named target column, numeric features.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"

namespace cqpc {

struct CsvOptions {
  std::string target = "demand";
  /// Explicit feature columns. Empty means every numeric non-target column.
  std::vector<std::string> features;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const CsvOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty input");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto f : detail::split_fields(line)) header.emplace_back(f);

  auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    return std::nullopt;
  };

  std::vector<std::string> missing;
  const auto target = column_of(options.target);
  if (!target) missing.push_back(options.target);
  std::vector<std::size_t> feature_cols;
  std::vector<std::string> names;
  for (const auto& name : options.features) {
    if (auto c = column_of(name)) {
      feature_cols.push_back(*c);
      names.push_back(name);
    } else {
      missing.push_back(name);
    }
  }
  if (!missing.empty()) {
    std::string msg = "csv: missing columns:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  std::vector<std::vector<std::string>> raw;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("csv: row " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    raw.emplace_back(fields.begin(), fields.end());
  }
  if (raw.empty()) throw DataError("csv: no data rows");

  if (options.features.empty()) {
    // A column is a feature when its first data cell is numeric.
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == *target) continue;
      if (detail::parse_number(raw.front()[j])) {
        feature_cols.push_back(j);
        names.push_back(header[j]);
      }
    }
    if (feature_cols.empty()) throw DataError("csv: no numeric feature columns");
  }

  std::vector<double> features;
  std::vector<double> demand;
  features.reserve(raw.size() * feature_cols.size());
  demand.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto cell = [&](std::size_t j) {
      auto v = detail::parse_number(raw[i][j]);
      if (!v) {
        throw DataError("csv: non-numeric value '" + raw[i][j] + "' in column '" + header[j] +
                        "' at row " + std::to_string(i + 2));
      }
      return *v;
    };
    for (std::size_t j : feature_cols) features.push_back(cell(j));
    demand.push_back(cell(*target));
  }
  return Dataset(std::move(features), std::move(demand), std::move(names));
}

inline Dataset read_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open " + path.string());
  return parse_csv(in, options);
}

/// Writes features followed by the demand column. Numbers use the shortest
/// representation that round-trips, so output is byte-stable.
inline void write_csv(std::ostream& out, const Dataset& data,
                      const std::string& target_name = "demand") {
  for (const auto& name : data.feature_names()) out << name << ',';
  out << target_name << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (double v : data.row(i)) out << detail::format_number(v) << ',';
    out << detail::format_number(data.demand(i)) << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const Dataset& data,
                      const std::string& target_name = "demand") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("csv: cannot write " + path.string());
  write_csv(out, data, target_name);
}

}  // namespace cqpc
