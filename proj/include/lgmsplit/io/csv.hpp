#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lgmsplit/error.hpp"
#include "lgmsplit/trace.hpp"

namespace lgm::io {

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw IoError("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError(where + ": cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

inline long parse_long(std::string_view s, const std::string& where) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError(where + ": cannot parse '" + std::string(s) + "' as an integer");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  return f;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  return f;
}

inline void check_written(std::ofstream& f, const std::filesystem::path& path) {
  f.flush();
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

/// Rows of a CSV file with a header; blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw IoError("CSV is missing column '" + name + "'");
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f = open_input(path);
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    for (auto c : split(line)) cells.emplace_back(c);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw IoError(path.string() + ": empty file");
  return t;
}

/// Header "iteration,<names>", one row per recorded iteration.
inline void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace) {
  std::ofstream f = open_output(path);
  std::string line = "iteration";
  for (const auto& n : trace.names) {
    if (n.find(',') != std::string::npos) throw IoError("parameter name contains a comma: " + n);
    line += ',';
    line += n;
  }
  f << line << '\n';
  for (Eigen::Index r = 0; r < trace.length(); ++r) {
    line = std::to_string(trace.iterations[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < trace.parameters(); ++c) {
      line += ',';
      line += format_double(trace.values(r, c));
    }
    f << line << '\n';
  }
  check_written(f, path);
}

inline ChainTrace read_trace_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.front() != "iteration") throw IoError(path.string() + ": first column must be 'iteration'");
  ChainTrace trace;
  trace.names.assign(t.header.begin() + 1, t.header.end());
  trace.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(trace.names.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + ":" + std::to_string(r + 2);
    trace.iterations.push_back(parse_long(t.rows[r][0], where));
    for (std::size_t c = 1; c < t.rows[r].size(); ++c) {
      trace.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = parse_double(t.rows[r][c], where);
    }
  }
  trace.validate();
  return trace;
}

}  // namespace lgm::io
