#include <doctest.h>

#include <sstream>

#include "gridhedge/error.hpp"
#include "gridhedge/timeseries_csv.hpp"

using namespace gridhedge;

namespace {

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    read_power_csv(in);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("ISO-8601 timestamps") {
  CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_iso8601("2020-06-01T10:00") == 1591005600);
  CHECK(parse_iso8601("2020-06-01 10:00:30") == 1591005630);
  CHECK(parse_iso8601("2020-06-01T03:00-07:00") == 1591005600);
  CHECK(parse_iso8601("2020-06-01T12:30+02:30") == 1591005600);
  CHECK_THROWS_AS(parse_iso8601("2020-13-01T00:00"), Error);
  CHECK_THROWS_AS(parse_iso8601("June 1"), Error);
  CHECK_THROWS_AS(parse_iso8601("2020-06-01T10:00Q"), Error);
}

TEST_CASE("reads a uniform series") {
  std::istringstream in(
      "timestamp,power_kw\n"
      "2020-06-01T10:00:00Z,12.5\n"
      "2020-06-01T10:05:00Z,13\n"
      "\n"
      "2020-06-01T10:10:00Z,12.75\r\n");
  const auto s = read_power_csv(in);
  REQUIRE(s.size() == 3);
  CHECK(s.interval_hours == doctest::Approx(1.0 / 12.0));
  CHECK(s.power_kw[2] == 12.75);
}

TEST_CASE("diagnostics name the offending row") {
  CHECK(error_of("").find("no data rows") != std::string::npos);
  CHECK(error_of("timestamp,power_kw\n").find("no data rows") != std::string::npos);
  CHECK(error_of("time,kw\n2020-06-01T10:00,1\n").find("row 1") != std::string::npos);
  CHECK(error_of("timestamp,power_kw\n2020-06-01T10:00,1\n2020-06-01T10:05,x\n").find("row 3") !=
        std::string::npos);
  CHECK(error_of("timestamp,power_kw\n2020-06-01T10:00,1\n2020-06-01T10:00,2\n").find(
            "strictly increasing") != std::string::npos);
  const auto gap = error_of(
      "timestamp,power_kw\n2020-06-01T10:00,1\n2020-06-01T10:05,1\n2020-06-01T10:15,1\n");
  CHECK(gap.find("row 4") != std::string::npos);
  CHECK(gap.find("non-uniform") != std::string::npos);
  CHECK(error_of("timestamp,power_kw\n2020-06-01T10:00,1,2\n").find("row 2") != std::string::npos);
}

TEST_CASE("daily window slicing") {
  PowerSeries s;
  s.interval_hours = 1.0;
  const std::int64_t day = parse_iso8601("2020-06-01T00:00Z");
  for (int h = 0; h < 48; ++h) {
    s.epoch_seconds.push_back(day + h * 3600);
    s.power_kw.push_back(h);
  }
  const auto [start, end] = parse_window("10:00-17:00");
  CHECK(start == 600);
  CHECK(end == 1020);
  const auto runs = slice_daily_window(s, start, end);
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].size() == 8);
  CHECK(runs[0].front() == 10);
  CHECK(runs[1].back() == 41);

  CHECK_THROWS_AS(parse_window("17:00-10:00"), Error);
  CHECK_THROWS_AS(parse_window("10-17"), Error);
}
