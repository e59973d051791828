#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sogmix/common.hpp"

namespace sogmix {

// Minimal CSV support for the pipeline's flat comma-separated files.
// Lines starting with '#' are comments; the first non-comment line is the
// header. Fields may not contain commas or newlines (none of our schemas
// need quoting).
class CsvTable {
 public:
  static CsvTable read_file(const std::string& path);
  static CsvTable from_string(const std::string& text, const std::string& origin);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  // Source line number of data row i, for error context.
  int line_of(std::size_t i) const { return line_numbers_[i]; }
  const std::string& origin() const { return origin_; }

  bool has_column(const std::string& name) const;
  // Index of a required column; throws DataError naming the file otherwise.
  int column(const std::string& name) const;

  const std::string& cell(std::size_t i, int col) const { return rows_[i][col]; }
  double number(std::size_t i, int col) const;
  std::int64_t integer(std::size_t i, int col) const;

 private:
  std::string origin_;
  std::vector<std::string> header_;
  std::map<std::string, int> index_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<int> line_numbers_;
};

// Streaming writer that stamps the schema comment expected on every output:
//   # schema_version: 1
//   col_a,col_b,...
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            int schema_version = 1);
  ~CsvWriter();

  void write_row(const std::vector<std::string>& fields);
  void close();

  // Shortest decimal form that parses back to the identical double.
  static std::string fmt(double v);
  static std::string fmt(std::int64_t v);

 private:
  std::ofstream out_;
  std::string path_;
  std::size_t width_;
};

}  // namespace sogmix
