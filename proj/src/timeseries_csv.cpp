#include "gridhedge/timeseries_csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "gridhedge/error.hpp"

namespace gridhedge {
namespace {

// Days since 1970-01-01 of a proleptic Gregorian date (H. Hinnant).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_row(std::size_t line, const std::string& why) {
  throw Error(ErrorKind::MalformedInput, "row " + std::to_string(line) + ": " + why);
}

}  // namespace

std::int64_t parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, consumed = 0;
  char sep = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed) != 6 ||
      (sep != 'T' && sep != ' ')) {
    throw Error(ErrorKind::MalformedInput, "bad ISO-8601 timestamp '" + text + "'");
  }
  std::size_t pos = static_cast<std::size_t>(consumed);
  double sec = 0.0;
  if (pos < text.size() && text[pos] == ':') {
    std::size_t used = 0;
    try {
      sec = std::stod(text.substr(pos + 1), &used);
    } catch (const std::exception&) {
      throw Error(ErrorKind::MalformedInput, "bad seconds in timestamp '" + text + "'");
    }
    pos += 1 + used;
  }
  std::int64_t offset = 0;
  if (pos < text.size()) {
    const char z = text[pos];
    if (z == 'Z' && pos + 1 == text.size()) {
      pos += 1;
    } else if ((z == '+' || z == '-') && text.size() - pos == 6 && text[pos + 3] == ':') {
      const int oh = std::stoi(text.substr(pos + 1, 2));
      const int om = std::stoi(text.substr(pos + 4, 2));
      offset = (z == '+' ? 1 : -1) * (oh * 3600 + om * 60);
      pos = text.size();
    } else {
      throw Error(ErrorKind::MalformedInput, "bad timezone in timestamp '" + text + "'");
    }
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec < 0.0 || sec >= 61.0) {
    throw Error(ErrorKind::MalformedInput, "timestamp field out of range '" + text + "'");
  }
  const std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return days * 86400 + h * 3600 + mi * 60 + static_cast<std::int64_t>(std::llround(sec)) - offset;
}

PowerSeries read_power_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw Error(ErrorKind::MalformedInput, "no data rows");
  {
    std::string header = trim(line);
    if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header = header.substr(3);
    if (header != "timestamp,power_kw") {
      bad_row(line_no, "expected header 'timestamp,power_kw', got '" + header + "'");
    }
  }

  PowerSeries series;
  std::int64_t step = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    if (comma == std::string::npos || row.find(',', comma + 1) != std::string::npos) {
      bad_row(line_no, "expected two comma-separated fields");
    }
    std::int64_t ts = 0;
    try {
      ts = parse_iso8601(trim(row.substr(0, comma)));
    } catch (const Error& e) {
      bad_row(line_no, e.what());
    }
    double kw = 0.0;
    try {
      std::size_t used = 0;
      const std::string field = trim(row.substr(comma + 1));
      kw = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      bad_row(line_no, "power_kw is not a number");
    }
    if (!series.epoch_seconds.empty()) {
      const std::int64_t delta = ts - series.epoch_seconds.back();
      if (delta <= 0) bad_row(line_no, "timestamps must be strictly increasing");
      if (step == 0) {
        step = delta;
      } else if (delta != step) {
        bad_row(line_no, "non-uniform spacing (" + std::to_string(delta) + " s, expected " +
                             std::to_string(step) + " s)");
      }
    }
    series.epoch_seconds.push_back(ts);
    series.power_kw.push_back(kw);
  }
  if (series.power_kw.empty()) throw Error(ErrorKind::MalformedInput, "no data rows");
  series.interval_hours = static_cast<double>(step) / 3600.0;
  return series;
}

PowerSeries read_power_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MalformedInput, "cannot open " + path.string());
  return read_power_csv(in);
}

std::vector<std::vector<double>> slice_daily_window(const PowerSeries& series, int start_minute,
                                                    int end_minute) {
  std::vector<std::vector<double>> runs;
  std::int64_t last_kept = 0;
  bool open = false;
  const auto step = static_cast<std::int64_t>(std::llround(series.interval_hours * 3600.0));
  for (std::size_t k = 0; k < series.size(); ++k) {
    const std::int64_t ts = series.epoch_seconds[k];
    const std::int64_t sod = ((ts % 86400) + 86400) % 86400;
    const bool inside = sod >= start_minute * 60LL && sod <= end_minute * 60LL;
    if (!inside) {
      open = false;
      continue;
    }
    if (!open || ts - last_kept != step) runs.emplace_back();
    runs.back().push_back(series.power_kw[k]);
    last_kept = ts;
    open = true;
  }
  return runs;
}

std::pair<int, int> parse_window(const std::string& text) {
  int h1 = 0, m1 = 0, h2 = 0, m2 = 0, consumed = 0;
  if (std::sscanf(text.c_str(), "%d:%d-%d:%d%n", &h1, &m1, &h2, &m2, &consumed) != 4 ||
      static_cast<std::size_t>(consumed) != text.size() || h1 < 0 || h1 > 24 || h2 < 0 ||
      h2 > 24 || m1 < 0 || m1 > 59 || m2 < 0 || m2 > 59) {
    throw Error(ErrorKind::InvalidArgument, "window must look like HH:MM-HH:MM, got '" + text + "'");
  }
  const int start = h1 * 60 + m1, end = h2 * 60 + m2;
  if (end <= start) throw Error(ErrorKind::InvalidArgument, "window end must follow its start");
  return {start, end};
}

}  // namespace gridhedge
