#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "shgp/errors.hpp"

namespace shgp {

// Minimal numeric CSV support: header row, comma separated, decimal point.
// This covers every file format the project reads or writes.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int col(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end())
      throw DataError("missing required column '" + name + "'");
    return static_cast<int>(it - columns.begin());
  }

  bool has_col(const std::string& name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
  }

  std::size_t n_rows() const { return rows.size(); }
};

namespace detail {
inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  for (const auto& f : detail::split_line(line))
    table.columns.push_back(detail::trim(f));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_line(line);
    if (fields.size() != table.columns.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.columns.size()) + " fields, got " +
                      std::to_string(fields.size()));
    std::vector<double> row(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const std::string f = detail::trim(fields[i]);
      char* end = nullptr;
      row[i] = std::strtod(f.c_str(), &end);
      if (end == f.c_str() || *end != '\0')
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": not a number: '" + f + "'");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// %.17g keeps doubles bit-exact across a write/read round trip.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    out << (i ? "," : "") << table.columns[i];
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace shgp
