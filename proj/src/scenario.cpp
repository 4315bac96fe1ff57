#include "gridhedge/scenario.hpp"

#include <cmath>
#include <cstdio>

#include "gridhedge/error.hpp"
#include "gridhedge/parallel.hpp"
#include "gridhedge/random.hpp"
#include "gridhedge/stats.hpp"

namespace gridhedge {

std::string to_string(const CaseLabel& label) {
  std::string s;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (i) s += '_';
    s += label[i] == Comparator::AtLeast ? "ge" : "lt";
  }
  return s;
}

CaseLabel parse_case_label(const std::string& text) {
  CaseLabel label;
  std::string token;
  auto flush = [&] {
    if (token == "ge" || token == ">=") {
      label.push_back(Comparator::AtLeast);
    } else if (token == "lt" || token == "<") {
      label.push_back(Comparator::Below);
    } else {
      throw Error(ErrorKind::InvalidArgument, "bad case comparator '" + token + "' (use ge or lt)");
    }
    token.clear();
  };
  for (char c : text) {
    if (c == '_' || c == ',') {
      flush();
    } else if (c != ' ') {
      token += c;
    }
  }
  flush();
  return label;
}

CaseLabel classify_terminal(std::span<const double> terminal_pg, std::span<const double> demands) {
  if (terminal_pg.size() != demands.size()) {
    throw Error(ErrorKind::LengthMismatch, "generation and demand vectors differ in length");
  }
  CaseLabel label(demands.size());
  for (std::size_t i = 0; i < demands.size(); ++i) {
    label[i] = terminal_pg[i] >= demands[i] ? Comparator::AtLeast : Comparator::Below;
  }
  return label;
}

void ScenarioConfig::validate() const {
  grid.validate();
  if (initial_kw.size() != grid.size()) {
    throw Error(ErrorKind::LengthMismatch, "initial generation needs one value per microgrid");
  }
  for (double p : initial_kw) {
    if (!(p > 0.0)) throw Error(ErrorKind::NonPositiveGeneration, "initial generation must be > 0");
  }
  if (!(horizon_hours > 0.0)) throw Error(ErrorKind::InvalidHorizon, "horizon must be > 0");
  if (rebalance_steps < 1) throw Error(ErrorKind::InvalidArgument, "rebalance_steps must be >= 1");
  if (n_paths < 1) throw Error(ErrorKind::InvalidArgument, "n_paths must be >= 1");
  if (case_filter && case_filter->size() != grid.size()) {
    throw Error(ErrorKind::LengthMismatch, "case filter needs one comparator per microgrid");
  }
  if (bootstrap_resamples < 100) {
    throw Error(ErrorKind::InvalidArgument, "bootstrap_resamples must be >= 100");
  }
  if (!(ci_level > 0.0 && ci_level < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "ci_level must lie in (0,1)");
  }
}

ScenarioConfig case_study_config() {
  ScenarioConfig c;
  c.grid.microgrids = {MicrogridSpec{20.0, GbmParams{0.006, 0.03}, "mg1"},
                       MicrogridSpec{25.0, GbmParams{0.005, 0.04}, "mg2"}};
  c.grid.corr = CorrelationMatrix::pair(0.6);
  c.grid.battery_unit_kw = 1.0;
  c.initial_kw = {20.0, 25.0};
  c.horizon_hours = 5.0;
  c.rebalance_steps = 5;
  c.n_paths = 10000;
  return c;
}

SavingsSeries battery_savings(std::span<const double> tes_b, std::span<const double> ces_b) {
  if (tes_b.size() != ces_b.size()) {
    throw Error(ErrorKind::LengthMismatch, "battery series are not aligned");
  }
  SavingsSeries s;
  s.pct.resize(tes_b.size());
  for (std::size_t k = 0; k < tes_b.size(); ++k) {
    s.pct[k] = ces_b[k] > 0.0 ? 100.0 * (1.0 - tes_b[k] / ces_b[k]) : 0.0;
    s.overall += s.pct[k];
  }
  if (!s.pct.empty()) s.overall /= static_cast<double>(s.pct.size());
  return s;
}

PathAllocations evaluate_path(const ScenarioConfig& config, const LatticeStepModel& model,
                              std::span<const double> path) {
  const std::size_t n = config.grid.size();
  const std::size_t steps = config.rebalance_steps;
  const double dt = config.horizon_hours / static_cast<double>(steps);
  const double p_b = config.grid.battery_unit_kw;
  const auto demands = config.grid.demands();

  PathAllocations out;
  std::vector<double> prev_a(n, 0.0);
  for (std::size_t s = 0; s <= steps; ++s) {
    const auto pg = path.subspan(s * n, n);
    // Pin the last time to the horizon so the terminal branch is exact.
    const double t = s == steps ? config.horizon_hours : dt * static_cast<double>(s);

    double b_ces = 0.0, v_ces = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = ces_allocation(pg[i], config.grid.microgrids[i], t, config.horizon_hours, p_b);
      b_ces += a.b_hat;
      v_ces += a.value_hat;
    }

    double b_tes = 0.0, v_tes = 0.0;
    if (s < steps) {
      const auto d = tes_allocate(config.grid, model, pg, steps - s, prev_a, config.engine,
                                  config.max_nodes);
      b_tes = d.allocation.b;
      v_tes = d.value;
      prev_a = d.allocation.a;
    } else {
      v_tes = tes_terminal_payoff(pg, demands);
      if (config.tes_terminal == TesTerminalRule::Limit) {
        b_tes = tes_terminal_allocation(pg, demands, p_b).b;
      } else {
        const TreeNode node{{pg.begin(), pg.end()}, v_tes, 1.0, 1.0, 0};
        b_tes = compute_resources(v_tes, std::span<const TreeNode>(&node, 1), prev_a, p_b).b;
      }
    }
    out.b_tes.push_back(b_tes);
    out.b_ces.push_back(b_ces);
    out.v_tes.push_back(v_tes);
    out.v_ces.push_back(v_ces);
  }
  out.savings_pct = battery_savings(out.b_tes, out.b_ces).pct;
  return out;
}

CaseResult run_case_study(const ScenarioConfig& config) {
  config.validate();
  const std::size_t n = config.grid.size();
  const std::size_t steps = config.rebalance_steps;
  const double dt = config.horizon_hours / static_cast<double>(steps);
  const auto model = calibrate_step_model(config.grid, dt);
  const GbmSimulator sim(config.grid.params(), config.grid.corr);
  const auto demands = config.grid.demands();
  const std::size_t stride = (steps + 1) * n;
  const std::uint64_t path_seed = derive_seed(config.seed, "paths");

  CaseResult result;
  result.case_name = config.case_filter ? to_string(*config.case_filter) : "all";

  // Candidates are drawn in batches; acceptance is decided in candidate order
  // so the kept set does not depend on the batch size or thread count.
  const std::size_t max_candidates =
      config.case_filter ? 1000 * config.n_paths + 10000 : config.n_paths;
  std::vector<double> accepted;
  accepted.reserve(config.n_paths * stride);
  std::size_t n_accepted = 0, next_candidate = 0;
  std::vector<double> batch;
  std::vector<CaseLabel> labels;
  while (n_accepted < config.n_paths && next_candidate < max_candidates) {
    const std::size_t remaining = config.n_paths - n_accepted;
    const std::size_t want = config.case_filter ? std::max<std::size_t>(4 * remaining, 1024) : remaining;
    const std::size_t count = std::min(want, max_candidates - next_candidate);
    batch.assign(count * stride, 0.0);
    labels.assign(count, {});
    parallel_for(count, [&](std::size_t j) {
      std::span<double> out(batch.data() + j * stride, stride);
      sim.simulate_path(config.initial_kw, dt, steps, Measure::Physical, path_seed,
                        next_candidate + j, out);
      labels[j] = classify_terminal(std::span<const double>(out).subspan(steps * n, n), demands);
    });
    for (std::size_t j = 0; j < count; ++j) {
      ++result.n_candidates;
      ++result.case_counts[to_string(labels[j])];
      if (n_accepted < config.n_paths && (!config.case_filter || labels[j] == *config.case_filter)) {
        accepted.insert(accepted.end(), batch.begin() + static_cast<std::ptrdiff_t>(j * stride),
                        batch.begin() + static_cast<std::ptrdiff_t>((j + 1) * stride));
        ++n_accepted;
      }
    }
    next_candidate += count;
  }
  if (n_accepted == 0) {
    throw Error(ErrorKind::InsufficientPaths,
                "no simulated path matched case filter '" + result.case_name + "' after " +
                    std::to_string(result.n_candidates) + " candidates");
  }
  result.n_accepted = n_accepted;

  std::vector<PathAllocations> per_path(n_accepted);
  parallel_for(n_accepted, [&](std::size_t p) {
    per_path[p] = evaluate_path(
        config, model, std::span<const double>(accepted.data() + p * stride, stride));
  });

  for (std::size_t s = 0; s <= steps; ++s) {
    result.times.push_back(s == steps ? config.horizon_hours : dt * static_cast<double>(s));
  }
  const std::uint64_t boot_seed = derive_seed(config.seed, "bootstrap");
  std::vector<double> column(n_accepted);
  auto aggregate = [&](MetricSeries& series, std::size_t metric,
                       std::vector<double> PathAllocations::*field) {
    for (std::size_t s = 0; s <= steps; ++s) {
      for (std::size_t p = 0; p < n_accepted; ++p) column[p] = (per_path[p].*field)[s];
      const auto ci = bootstrap_ci(column, config.bootstrap_resamples, config.ci_level,
                                   stream_seed(boot_seed, metric * 100003 + s));
      series.mean.push_back(ci.mean);
      series.lo.push_back(ci.lo);
      series.hi.push_back(ci.hi);
    }
  };
  aggregate(result.b_tes, 0, &PathAllocations::b_tes);
  aggregate(result.b_ces, 1, &PathAllocations::b_ces);
  aggregate(result.v_tes, 2, &PathAllocations::v_tes);
  aggregate(result.v_ces, 3, &PathAllocations::v_ces);
  aggregate(result.savings_pct, 4, &PathAllocations::savings_pct);
  double total = 0.0;
  for (double v : result.savings_pct.mean) total += v;
  result.overall_savings_pct = total / static_cast<double>(result.savings_pct.mean.size());

  result.pg_mean.assign(n, std::vector<double>(steps + 1, 0.0));
  result.pg_std.assign(n, std::vector<double>(steps + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s <= steps; ++s) {
      double mean = 0.0;
      for (std::size_t p = 0; p < n_accepted; ++p) mean += accepted[p * stride + s * n + i];
      mean /= static_cast<double>(n_accepted);
      double ss = 0.0;
      for (std::size_t p = 0; p < n_accepted; ++p) {
        const double d = accepted[p * stride + s * n + i] - mean;
        ss += d * d;
      }
      result.pg_mean[i][s] = mean;
      result.pg_std[i][s] = n_accepted > 1 ? std::sqrt(ss / static_cast<double>(n_accepted - 1)) : 0.0;
    }
  }
  return result;
}

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

void write_results_csv(std::ostream& out, const CaseResult& r, bool header) {
  if (header) out << "t_hours,metric,case,mean,ci_lo,ci_hi\n";
  auto row = [&](std::size_t s, const std::string& metric, double mean, double lo, double hi) {
    out << fmt(r.times[s]) << ',' << metric << ',' << r.case_name << ',' << fmt(mean) << ','
        << fmt(lo) << ',' << fmt(hi) << '\n';
  };
  for (std::size_t s = 0; s < r.times.size(); ++s) {
    row(s, "b_tes", r.b_tes.mean[s], r.b_tes.lo[s], r.b_tes.hi[s]);
    row(s, "b_ces", r.b_ces.mean[s], r.b_ces.lo[s], r.b_ces.hi[s]);
    row(s, "v_tes", r.v_tes.mean[s], r.v_tes.lo[s], r.v_tes.hi[s]);
    row(s, "v_ces", r.v_ces.mean[s], r.v_ces.lo[s], r.v_ces.hi[s]);
    row(s, "savings_pct", r.savings_pct.mean[s], r.savings_pct.lo[s], r.savings_pct.hi[s]);
    for (std::size_t i = 0; i < r.pg_mean.size(); ++i) {
      const double m = r.pg_mean[i][s], sd = r.pg_std[i][s];
      row(s, "pg_mean_" + std::to_string(i + 1), m, m - sd, m + sd);
    }
    for (std::size_t i = 0; i < r.pg_std.size(); ++i) {
      const double sd = r.pg_std[i][s];
      row(s, "pg_std_" + std::to_string(i + 1), sd, sd, sd);
    }
  }
}

}  // namespace gridhedge
