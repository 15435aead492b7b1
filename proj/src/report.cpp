#include "selattn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace selattn {

void ExperimentReport::add_row(std::vector<double> row) {
  if (row.size() != columns.size()) {
    throw std::invalid_argument("ExperimentReport: row width does not match columns");
  }
  rows.push_back(std::move(row));
}

std::vector<double> ExperimentReport::column(std::string_view col) const {
  auto it = std::find(columns.begin(), columns.end(), col);
  if (it == columns.end()) {
    throw std::invalid_argument("ExperimentReport: no column named " + std::string(col));
  }
  const std::size_t j = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[j]);
  return out;
}

SeriesSummary summarize(const std::vector<double>& xs) {
  SeriesSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.min = xs[0];
  s.max = xs[0];
  double sum = 0.0;
  for (double x : xs) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
  return s;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string format_double(double x) {
  char buf[64];
  // integral values print without an exponent or trailing zeros
  if (x == std::floor(x) && std::abs(x) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", x);
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  double back = std::strtod(buf, nullptr);
  if (back == x) {
    for (int prec = 6; prec < 17; ++prec) {
      std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
      if (std::strtod(buf, nullptr) == x) break;
    }
  }
  return buf;
}

RunWriter::RunWriter(std::string out_dir, bool force) : out_dir_(std::move(out_dir)), force_(force) {
  std::filesystem::create_directories(out_dir_);
}

std::string RunWriter::path_for(const std::string& filename) const {
  std::filesystem::path p = std::filesystem::path(out_dir_) / filename;
  if (!force_ && std::filesystem::exists(p)) {
    throw std::runtime_error("refusing to overwrite " + p.string() + " (pass --force)");
  }
  return p.string();
}

void RunWriter::write_csv(const ExperimentReport& report,
                          const std::vector<std::pair<std::string, std::string>>& prefix) const {
  const std::string path = path_for(report.name + ".csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);

  bool first = true;
  for (const auto& [key, value] : prefix) {
    (void)value;
    out << (first ? "" : ",") << key;
    first = false;
  }
  for (const auto& col : report.columns) {
    out << (first ? "" : ",") << col;
    first = false;
  }
  out << "\n";
  for (const auto& row : report.rows) {
    first = true;
    for (const auto& [key, value] : prefix) {
      (void)key;
      out << (first ? "" : ",") << value;
      first = false;
    }
    for (double x : row) {
      out << (first ? "" : ",") << format_double(x);
      first = false;
    }
    out << "\n";
  }
}

void RunWriter::write_table(const std::string& name, const std::vector<std::string>& header,
                            const std::vector<std::vector<std::string>>& rows) const {
  const std::string path = path_for(name + ".csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw std::invalid_argument("write_table: row width does not match header");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << row[i];
    }
    out << "\n";
  }
}

void RunWriter::write_text(const std::string& filename, const std::string& contents) const {
  const std::string path = path_for(filename);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << contents;
}

}  // namespace selattn
