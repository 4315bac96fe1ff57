#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

namespace gridhedge {

/// Uniformly sampled power series read from `timestamp,power_kw` CSV.
struct PowerSeries {
  std::vector<std::int64_t> epoch_seconds;  // UTC
  std::vector<double> power_kw;
  double interval_hours = 0.0;

  std::size_t size() const { return power_kw.size(); }
};

/// Parses ISO-8601 "YYYY-MM-DDTHH:MM[:SS][Z|+HH:MM|-HH:MM]" (a space may
/// replace the 'T'). Returns seconds since the Unix epoch, UTC.
std::int64_t parse_iso8601(const std::string& text);

/// Throws Error(MalformedInput) with the 1-based file line number of the
/// offending row on bad headers, unparsable fields, non-increasing or
/// non-uniform timestamps, and on files without data rows ("no data rows").
PowerSeries read_power_csv(std::istream& in);
PowerSeries read_power_csv(const std::filesystem::path& path);

/// Keeps samples whose UTC time of day lies in [start, end] (minutes after
/// midnight, inclusive) and splits them into runs of consecutive samples, one
/// run per contiguous window.
std::vector<std::vector<double>> slice_daily_window(const PowerSeries& series, int start_minute,
                                                    int end_minute);

/// "HH:MM-HH:MM" -> {start_minute, end_minute}.
std::pair<int, int> parse_window(const std::string& text);

}  // namespace gridhedge
