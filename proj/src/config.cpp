#include "gridhedge/config.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "gridhedge/error.hpp"

#ifndef GRIDHEDGE_VERSION
#define GRIDHEDGE_VERSION "dev"
#endif

namespace gridhedge {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

struct Entry {
  std::string value;
  std::size_t line = 0;
};

[[noreturn]] void fail(const Entry& e, const std::string& key, const std::string& why) {
  throw Error(ErrorKind::MalformedInput,
              "line " + std::to_string(e.line) + ": " + key + ": " + why);
}

double to_double(const Entry& e, const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument("x");
    return v;
  } catch (const std::exception&) {
    fail(e, key, "'" + text + "' is not a finite number");
  }
}

std::uint64_t to_count(const Entry& e, const std::string& key, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    fail(e, key, "'" + text + "' is not a non-negative integer");
  }
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    fail(e, key, "'" + text + "' is out of range");
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ", ";
    s += f(xs[i]);
  }
  return s;
}

}  // namespace

const char* tool_version() { return GRIDHEDGE_VERSION; }

ScenarioConfig parse_config(std::istream& in) {
  std::map<std::string, Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::MalformedInput,
                  "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.rfind("manifest.", 0) == 0) continue;
    if (entries.count(key)) {
      throw Error(ErrorKind::MalformedInput,
                  "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    entries[key] = Entry{trim(body.substr(eq + 1)), line_no};
  }

  auto take = [&](const std::string& key, bool required) -> std::optional<Entry> {
    auto it = entries.find(key);
    if (it == entries.end()) {
      if (required) throw Error(ErrorKind::MalformedInput, "missing required key '" + key + "'");
      return std::nullopt;
    }
    Entry e = it->second;
    entries.erase(it);
    return e;
  };

  ScenarioConfig c;
  const auto count_entry = take("microgrids", true);
  const auto n = static_cast<std::size_t>(to_count(*count_entry, "microgrids", count_entry->value));
  if (n == 0) fail(*count_entry, "microgrids", "must be >= 1");

  auto vec = [&](const std::string& key, std::size_t expected) {
    const auto e = take(key, true);
    const auto items = split_list(e->value);
    if (items.size() != expected) {
      fail(*e, key, "expected " + std::to_string(expected) + " values, got " +
                        std::to_string(items.size()));
    }
    std::vector<double> out;
    for (const auto& item : items) out.push_back(to_double(*e, key, item));
    return out;
  };

  const auto mu = vec("mu_per_hour", n);
  const auto sigma = vec("sigma_per_sqrt_hour", n);
  const auto demand = vec("demand_kw", n);
  c.initial_kw = vec("initial_kw", n);
  std::vector<std::string> labels;
  if (const auto e = take("labels", false)) {
    labels = split_list(e->value);
    if (labels.size() != n) fail(*e, "labels", "expected one label per microgrid");
  }
  for (std::size_t i = 0; i < n; ++i) {
    c.grid.microgrids.push_back(MicrogridSpec{demand[i], GbmParams{mu[i], sigma[i]},
                                              labels.empty() ? "mg" + std::to_string(i + 1) : labels[i]});
  }

  Eigen::MatrixXd rho = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  if (n > 1) {
    const auto upper = vec("correlation", n * (n - 1) / 2);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++k) {
        rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = upper[k];
        rho(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = upper[k];
      }
    }
  } else if (const auto e = take("correlation", false); e && !e->value.empty()) {
    fail(*e, "correlation", "a single microgrid takes no correlation entries");
  }
  c.grid.corr = CorrelationMatrix(std::move(rho));

  auto scalar = [&](const std::string& key, double fallback, bool required) {
    const auto e = take(key, required);
    return e ? to_double(*e, key, e->value) : fallback;
  };
  auto count = [&](const std::string& key, std::uint64_t fallback, bool required) {
    const auto e = take(key, required);
    return e ? to_count(*e, key, e->value) : fallback;
  };
  c.grid.battery_unit_kw = scalar("battery_unit_kw", 1.0, true);
  c.horizon_hours = scalar("horizon_hours", 0.0, true);
  c.rebalance_steps = static_cast<std::size_t>(count("rebalance_steps", 0, true));
  c.n_paths = static_cast<std::size_t>(count("paths", c.n_paths, false));
  c.seed = count("seed", c.seed, false);
  c.bootstrap_resamples = static_cast<std::size_t>(count("bootstrap_resamples", c.bootstrap_resamples, false));
  c.ci_level = scalar("ci_level", c.ci_level, false);
  c.max_nodes = count("max_nodes", c.max_nodes, false);
  if (const auto e = take("case_filter", false); e && e->value != "all" && !e->value.empty()) {
    try {
      c.case_filter = parse_case_label(e->value);
    } catch (const Error& err) {
      fail(*e, "case_filter", err.what());
    }
  }
  if (const auto e = take("tes_terminal", false)) {
    if (e->value == "limit") {
      c.tes_terminal = TesTerminalRule::Limit;
    } else if (e->value == "carry") {
      c.tes_terminal = TesTerminalRule::Carry;
    } else {
      fail(*e, "tes_terminal", "expected limit or carry");
    }
  }
  if (const auto e = take("lattice_engine", false)) {
    if (e->value == "recombining") {
      c.engine = LatticeEngine::Recombining;
    } else if (e->value == "tree") {
      c.engine = LatticeEngine::ReferenceTree;
    } else {
      fail(*e, "lattice_engine", "expected recombining or tree");
    }
  }
  if (!entries.empty()) {
    const auto& [key, e] = *entries.begin();
    fail(e, key, "unknown key");
  }
  try {
    c.validate();
  } catch (const Error& err) {
    if (err.kind() == ErrorKind::NotPositiveDefinite) throw;
    throw Error(ErrorKind::MalformedInput, err.what());
  }
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MalformedInput, "cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const ScenarioConfig& c) {
  const auto& mg = c.grid.microgrids;
  const std::size_t n = mg.size();
  out << "microgrids = " << n << '\n';
  out << "labels = " << join(mg, [](const MicrogridSpec& m) { return m.label; }) << '\n';
  out << "mu_per_hour = " << join(mg, [](const MicrogridSpec& m) { return fmt(m.gbm.mu); }) << '\n';
  out << "sigma_per_sqrt_hour = " << join(mg, [](const MicrogridSpec& m) { return fmt(m.gbm.sigma); })
      << '\n';
  if (n > 1) {
    std::vector<double> upper;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) upper.push_back(c.grid.corr(i, j));
    }
    out << "correlation = " << join(upper, fmt) << '\n';
  }
  out << "demand_kw = " << join(mg, [](const MicrogridSpec& m) { return fmt(m.demand_kw); }) << '\n';
  out << "battery_unit_kw = " << fmt(c.grid.battery_unit_kw) << '\n';
  out << "initial_kw = " << join(c.initial_kw, fmt) << '\n';
  out << "horizon_hours = " << fmt(c.horizon_hours) << '\n';
  out << "rebalance_steps = " << c.rebalance_steps << '\n';
  out << "paths = " << c.n_paths << '\n';
  out << "seed = " << c.seed << '\n';
  out << "case_filter = " << (c.case_filter ? to_string(*c.case_filter) : "all") << '\n';
  out << "bootstrap_resamples = " << c.bootstrap_resamples << '\n';
  out << "ci_level = " << fmt(c.ci_level) << '\n';
  out << "tes_terminal = " << (c.tes_terminal == TesTerminalRule::Limit ? "limit" : "carry") << '\n';
  out << "lattice_engine = " << (c.engine == LatticeEngine::Recombining ? "recombining" : "tree")
      << '\n';
  out << "max_nodes = " << c.max_nodes << '\n';
}

void write_file_atomically(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::MalformedInput, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorKind::MalformedInput, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path write_manifest(const std::filesystem::path& dir, const ScenarioConfig& config,
                                     const ManifestInfo& info) {
  std::ostringstream out;
  out << "# gridhedge run manifest; pass it back with --config to reproduce the outputs\n";
  write_config(out, config);
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  out << "manifest.tool_version = " << tool_version() << '\n';
  out << "manifest.command = " << info.command << '\n';
  out << "manifest.created_utc = " << stamp << '\n';
  for (std::size_t i = 0; i < info.outputs.size(); ++i) {
    out << "manifest.output." << i + 1 << " = " << info.outputs[i] << '\n';
  }
  out << info.extra;
  const auto path = dir / "manifest.txt";
  write_file_atomically(path, out.str());
  return path;
}

}  // namespace gridhedge
