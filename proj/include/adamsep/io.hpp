#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "adamsep/errors.hpp"

namespace adamsep {

/// Shortest decimal that reads back to the same double; "inf", "-inf", "nan" otherwise.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{}) throw InputError("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

/// Comma-separated rows with a fixed header.
class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { append(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw InputError("csv: row width differs from header");
    append(cells);
  }

  const std::string& str() const noexcept { return out_; }

private:
  void append(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out_ += ',';
      out_ += cells[k];
    }
    out_ += '\n';
  }

  std::size_t width_;
  std::string out_;
};

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open '" + path + "' for writing");
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw InputError("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// One-column CSV with header "eta"; blank lines are skipped.
inline std::vector<double> parse_schedule_csv(std::string_view text) {
  std::vector<double> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "eta") throw InputError("schedule csv: expected header 'eta'");
      header_seen = true;
      continue;
    }
    double v = 0.0;
    const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc{} || res.ptr != line.data() + line.size())
      throw InputError("schedule csv: line " + std::to_string(line_no) + " is not a number");
    out.push_back(v);
  }
  if (!header_seen) throw InputError("schedule csv: missing header 'eta'");
  if (out.empty()) throw InputError("schedule csv: no entries");
  return out;
}

inline std::vector<double> read_schedule_csv(const std::string& path) {
  return parse_schedule_csv(read_text_file(path));
}

}  // namespace adamsep
