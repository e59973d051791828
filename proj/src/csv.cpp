#include "sogmix/csv.hpp"

#include <charconv>
#include <cstdio>
#include <limits>
#include <sstream>

#include "sogmix/time.hpp"

namespace sogmix {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace

CsvTable CsvTable::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path);
}

CsvTable CsvTable::from_string(const std::string& text, const std::string& origin) {
  CsvTable t;
  t.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    if (!have_header) {
      t.header_ = split_fields(line);
      for (std::size_t i = 0; i < t.header_.size(); ++i)
        t.index_[t.header_[i]] = static_cast<int>(i);
      have_header = true;
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() != t.header_.size())
      throw DataError(origin + ":" + std::to_string(line_no) +
                      ": expected " + std::to_string(t.header_.size()) +
                      " fields, got " + std::to_string(fields.size()));
    t.rows_.push_back(std::move(fields));
    t.line_numbers_.push_back(line_no);
  }
  if (!have_header) throw DataError(origin + ": empty file (no header)");
  return t;
}

bool CsvTable::has_column(const std::string& name) const {
  return index_.count(name) > 0;
}

int CsvTable::column(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw DataError(origin_ + ": missing required column '" + name + "'");
  return it->second;
}

double CsvTable::number(std::size_t i, int col) const {
  const std::string& s = rows_[i][col];
  if (s == "inf" || s == "Inf" || s == "INF")
    return std::numeric_limits<double>::infinity();
  double v;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw DataError(origin_ + ":" + std::to_string(line_numbers_[i]) +
                    ": not a number: '" + s + "'");
  return v;
}

std::int64_t CsvTable::integer(std::size_t i, int col) const {
  const std::string& s = rows_[i][col];
  std::int64_t v;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw DataError(origin_ + ":" + std::to_string(line_numbers_[i]) +
                    ": not an integer: '" + s + "'");
  return v;
}

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header, int schema_version)
    : out_(path), path_(path), width_(header.size()) {
  if (!out_) throw DataError("cannot open file for writing: " + path);
  out_ << "# schema_version: " << schema_version << "\n";
  for (std::size_t i = 0; i < header.size(); ++i)
    out_ << header[i] << (i + 1 == header.size() ? "\n" : ",");
}

CsvWriter::~CsvWriter() { close(); }

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  if (fields.size() != width_)
    throw DataError(path_ + ": row width " + std::to_string(fields.size()) +
                    " != header width " + std::to_string(width_));
  for (std::size_t i = 0; i < fields.size(); ++i)
    out_ << fields[i] << (i + 1 == fields.size() ? "\n" : ",");
}

void CsvWriter::close() {
  if (out_.is_open()) out_.close();
}

std::string CsvWriter::fmt(double v) {
  char buf[40];
  // %.17g always round-trips; try shorter forms first for readable output.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back;
    auto [p, ec] = std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    (void)p;
    if (ec == std::errc() && back == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string CsvWriter::fmt(std::int64_t v) { return std::to_string(v); }

std::int64_t parse_date(const std::string& s) {
  int y, m, d;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
      std::sscanf(s.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3)
    throw DataError("malformed date (want YYYY-MM-DD): '" + s + "'");
  if (m < 1 || m > 12 || d < 1 || d > 31)
    throw DataError("date out of range: '" + s + "'");
  return days_from_civil(y, m, d);
}

std::int64_t parse_timestamp(const std::string& s) {
  int y, m, d, hh, mm, ss;
  if (s.size() < 19 || (s[10] != 'T' && s[10] != ' ') ||
      std::sscanf(s.c_str(), "%4d-%2d-%2d%*c%2d:%2d:%2d", &y, &m, &d, &hh, &mm,
                  &ss) != 6)
    throw DataError("malformed timestamp (want YYYY-MM-DDTHH:MM:SSZ): '" + s + "'");
  if (s.size() > 19 && s.substr(19) != "Z")
    throw DataError("unsupported timestamp suffix (UTC only): '" + s + "'");
  if (m < 1 || m > 12 || d < 1 || d > 31 || hh < 0 || hh > 23 || mm < 0 ||
      mm > 59 || ss < 0 || ss > 60)
    throw DataError("timestamp out of range: '" + s + "'");
  return days_from_civil(y, m, d) * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_date(std::int64_t epoch_day) {
  int y, m, d;
  civil_from_days(epoch_day, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
  std::int64_t day = epoch_day_of(epoch_seconds);
  std::int64_t rem = epoch_seconds - day * 86400;
  int y, m, d;
  civil_from_days(day, y, m, d);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                static_cast<int>(rem % 60));
  return buf;
}

}  // namespace sogmix
