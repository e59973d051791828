#pragma once

#include <cstdint>
#include <string>

#include "sogmix/common.hpp"

namespace sogmix {

// Days between 1970-01-01 and y-m-d in the proleptic Gregorian calendar
// (Hinnant's civil-days algorithm).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

// Parses "YYYY-MM-DD" into an epoch day. Throws DataError on malformed input.
std::int64_t parse_date(const std::string& s);

// Parses ISO-8601 UTC instants of the form "YYYY-MM-DDTHH:MM:SS" with an
// optional trailing "Z" (a space separator is also accepted). Returns epoch
// seconds.
std::int64_t parse_timestamp(const std::string& s);

inline std::int64_t epoch_day_of(std::int64_t epoch_seconds) {
  // Floor division: pre-1970 instants land on the correct calendar day.
  std::int64_t d = epoch_seconds / 86400;
  if (epoch_seconds % 86400 < 0) --d;
  return d;
}

std::string format_date(std::int64_t epoch_day);
std::string format_timestamp(std::int64_t epoch_seconds);

inline int month_of(std::int64_t epoch_day) {
  int y, m, d;
  civil_from_days(epoch_day, y, m, d);
  return m;
}

}  // namespace sogmix
