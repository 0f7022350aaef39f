#pragma once

// Calendar arithmetic. ISO-8601 strings convert to day counts here and
// nowhere else; the rest of the code works in integer days.

#include <cstdint>
#include <string>

namespace eopt {

// days since 1970-01-01 of the default dataset epoch, 2015-01-01
constexpr int64_t kDefaultEpochDay = 16436;

// proleptic Gregorian calendar <-> days since 1970-01-01
int64_t days_from_civil(int year, int month, int day);
void civil_from_days(int64_t days, int* year, int* month, int* day);

// "YYYY-MM-DD" -> days since 1970-01-01; throws ConfigError on bad input
int64_t parse_iso_date(const std::string& iso);
std::string format_iso_date(int64_t days);

// days since January 1 of the observation year (0-based; 365 on a leap day)
int day_of_year(int64_t days_since_1970);

}  // namespace eopt
