#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace selattn {

// Tabular experiment output: a fixed column schema plus one row per
// trial/bin/measurement. CSV is the interchange contract; summary stats go
// to JSON.
struct ExperimentReport {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
  std::vector<double> column(std::string_view col) const;
};

struct SeriesSummary {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

SeriesSummary summarize(const std::vector<double>& xs);

std::uint64_t fnv1a64(std::string_view bytes);

// Shortest decimal that round-trips a double.
std::string format_double(double x);

// Writes CSV/JSON artifacts into one output directory. Existing files are
// never overwritten unless force is set.
class RunWriter {
 public:
  RunWriter(std::string out_dir, bool force);

  // Header: prefix columns first, then the report's. Every row is prefixed
  // with the same prefix values (seed, config hash, ...). UTF-8, \n endings.
  void write_csv(const ExperimentReport& report,
                 const std::vector<std::pair<std::string, std::string>>& prefix) const;

  // Free-form table for rows that mix strings and numbers.
  void write_table(const std::string& name, const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) const;

  void write_text(const std::string& filename, const std::string& contents) const;

  const std::string& dir() const { return out_dir_; }

 private:
  std::string path_for(const std::string& filename) const;

  std::string out_dir_;
  bool force_;
};

}  // namespace selattn
