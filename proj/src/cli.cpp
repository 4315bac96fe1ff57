#include "gridhedge/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridhedge/ces_allocator.hpp"
#include "gridhedge/config.hpp"
#include "gridhedge/error.hpp"
#include "gridhedge/scenario.hpp"
#include "gridhedge/stochastic_process.hpp"
#include "gridhedge/tes_lattice.hpp"
#include "gridhedge/timeseries_csv.hpp"
#include "gridhedge/validation.hpp"

namespace gridhedge::cli {

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InfeasibleCalibration:
      return kCalibrationInfeasible;
    case ErrorKind::TimeOutOfRange:
    case ErrorKind::TreeTooLarge:
    case ErrorKind::MalformedTree:
      return kPrecondition;
    case ErrorKind::InsufficientPaths:
      return kEmptyResult;
    default:
      return kInputError;
  }
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

int cmd_estimate(const EstimateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto series = read_power_csv(std::filesystem::path(args.input));
    const double dt = args.interval_hours.value_or(series.interval_hours);
    if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "interval must be > 0 hours");
    std::vector<std::vector<double>> segments;
    if (args.window) {
      const auto [start, end] = parse_window(*args.window);
      segments = slice_daily_window(series, start, end);
    } else {
      segments.push_back(series.power_kw);
    }
    const auto fit = estimate_gbm_mle(segments, dt);
    const auto gof = chi_square_gof(fit.log_returns, fit.params(), dt, args.bins);
    out << "samples          " << series.size() << '\n'
        << "log_returns      " << fit.log_returns.size() << '\n'
        << "interval_hours   " << fmt(dt) << '\n'
        << "mu_per_hour      " << fmt(fit.mu) << '\n'
        << "sigma_per_sqrt_h " << fmt(fit.sigma) << '\n'
        << "chi_square       " << fmt(gof.statistic) << '\n'
        << "dof              " << gof.dof << '\n'
        << "p_value          " << fmt(gof.p_value) << '\n';
    return kOk;
  });
}

int cmd_allocate(const AllocateArgs& args, std::uint64_t max_nodes, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    const auto config = load_config(args.config);
    const auto& grid = config.grid;
    const std::size_t n = grid.size();
    const double horizon = config.horizon_hours;
    const double t = args.time_hours;
    if (!(t >= 0.0) || t >= horizon) {
      throw Error(ErrorKind::TimeOutOfRange,
                  "time out of range: need 0 <= t < " + fmt(horizon) + ", got " + fmt(t));
    }
    std::vector<double> pg = args.generation.empty() ? config.initial_kw : args.generation;
    if (pg.size() != n) throw Error(ErrorKind::LengthMismatch, "--generation needs one value per microgrid");
    for (double p : pg) {
      if (!(p > 0.0)) throw Error(ErrorKind::NonPositiveGeneration, "generation must be > 0 kW");
    }
    const double p_b = grid.battery_unit_kw;

    if (args.mode == "ces") {
      double a_sum = 0.0, b_sum = 0.0, v_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto alloc = ces_allocation(pg[i], grid.microgrids[i], t, horizon, p_b);
        out << "microgrid " << grid.microgrids[i].label << ": a_hat " << fmt(alloc.a_hat)
            << " b_hat " << fmt(alloc.b_hat) << " value " << fmt(alloc.value_hat) << '\n';
        a_sum += alloc.a_hat;
        b_sum += alloc.b_hat;
        v_sum += alloc.value_hat;
      }
      out << "total: b_hat " << fmt(b_sum) << " value " << fmt(v_sum) << '\n';
      (void)a_sum;
      return kOk;
    }
    if (args.mode != "tes") throw Error(ErrorKind::InvalidArgument, "--mode must be ces or tes");

    const double dt = horizon / static_cast<double>(config.rebalance_steps);
    const double steps_left = (horizon - t) / dt;
    const double rounded = std::round(steps_left);
    if (std::abs(steps_left - rounded) > 1e-9 * std::max(1.0, rounded)) {
      throw Error(ErrorKind::TimeOutOfRange, "time " + fmt(t) + " is not on the rebalancing grid (step " +
                                                 fmt(dt) + " h)");
    }
    const auto model = calibrate_step_model(grid, dt);
    std::vector<double> prev_a = args.prev_a;
    if (!prev_a.empty() && prev_a.size() != n) {
      throw Error(ErrorKind::LengthMismatch, "--prev-a needs one value per microgrid");
    }
    const auto decision = tes_allocate(grid, model, pg, static_cast<std::size_t>(rounded), prev_a,
                                       config.engine, max_nodes);
    for (std::size_t i = 0; i < n; ++i) {
      out << "microgrid " << grid.microgrids[i].label << ": a " << fmt(decision.allocation.a[i]) << '\n';
    }
    const double b_ces = ces_total_battery(pg, grid.microgrids, t, horizon, p_b);
    out << "b        " << fmt(decision.allocation.b) << '\n'
        << "value    " << fmt(decision.value) << '\n'
        << "residual " << fmt(decision.allocation.residual) << '\n'
        << "b_hat    " << fmt(b_ces) << '\n'
        << "savings  " << fmt(b_ces > 0.0 ? 100.0 * (1.0 - decision.allocation.b / b_ces) : 0.0)
        << " %\n";
    if (decision.allocation.rank_deficient) out << "note: replication system is rank deficient\n";
    return kOk;
  });
}

int cmd_simulate(const SimulateArgs& args, std::uint64_t max_nodes, std::ostream& out,
                 std::ostream& err, const std::string& command_line) {
  return guarded(err, [&] {
    auto config = load_config(args.config);
    if (args.paths) config.n_paths = *args.paths;
    if (args.seed) config.seed = *args.seed;
    if (args.case_filter) {
      if (*args.case_filter == "all") {
        config.case_filter.reset();
      } else {
        config.case_filter = parse_case_label(*args.case_filter);
      }
    }
    config.max_nodes = max_nodes;
    config.validate();

    CaseResult result;
    try {
      result = run_case_study(config);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientPaths) throw;
      err << "error: case filter '" << (config.case_filter ? to_string(*config.case_filter) : "all")
          << "' matched no simulated path\n";
      return static_cast<int>(kEmptyResult);
    }

    const std::filesystem::path dir(args.out_dir);
    std::filesystem::create_directories(dir);
    std::ostringstream csv;
    write_results_csv(csv, result);
    write_file_atomically(dir / "results.csv", csv.str());

    std::ostringstream extra;
    extra << "manifest.case = " << result.case_name << '\n'
          << "manifest.accepted_paths = " << result.n_accepted << '\n'
          << "manifest.candidate_paths = " << result.n_candidates << '\n';
    for (const auto& [label, count] : result.case_counts) {
      extra << "manifest.case_count." << label << " = " << count << '\n';
    }
    write_manifest(dir, config, ManifestInfo{command_line, {"results.csv"}, extra.str()});

    out << "case " << result.case_name << ": " << result.n_accepted << " paths kept of "
        << result.n_candidates << " simulated\n";
    out << "t_hours  b_tes  b_ces  savings_pct\n";
    for (std::size_t s = 0; s < result.times.size(); ++s) {
      out << fmt(result.times[s]) << "  " << fmt(result.b_tes.mean[s]) << "  "
          << fmt(result.b_ces.mean[s]) << "  " << fmt(result.savings_pct.mean[s]) << '\n';
    }
    out << "overall savings " << fmt(result.overall_savings_pct) << " %\n"
        << "wrote " << (dir / "results.csv").string() << " and " << (dir / "manifest.txt").string()
        << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_validate(const ValidateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ValidationOptions opt;
    opt.inject_cdf_fault = args.inject_fault;
    if (args.seed) opt.seed = *args.seed;
    if (args.case_paths) opt.case_paths = *args.case_paths;
    if (!args.json) opt.progress = &out;
    const auto results = run_validation(parse_suite(args.suite), opt);
    std::vector<std::string> failed;
    for (const auto& r : results) {
      if (!r.passed) failed.push_back(r.id + " " + r.name);
    }
    if (args.json) {
      nlohmann::json doc = nlohmann::json::array();
      for (const auto& r : results) {
        doc.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed},
                       {"detail", r.detail}, {"seconds", r.seconds}});
      }
      out << doc.dump(2) << '\n';
    }
    if (failed.empty()) return static_cast<int>(kOk);
    err << "failed:";
    for (const auto& f : failed) err << ' ' << '[' << f << ']';
    err << '\n';
    return static_cast<int>(kValidationFailed);
  });
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Demand-meeting battery allocation for microgrids under GBM generation", "gridhedge"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);
  std::uint64_t max_nodes = kDefaultMaxNodes;
  app.add_option("--max-nodes", max_nodes, "Leaf budget for lattice expansion")->capture_default_str();

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Fit GBM parameters to a power CSV");
  estimate->add_option("--input", est.input, "timestamp,power_kw CSV")->required();
  estimate->add_option("--interval", est.interval_hours, "Sampling interval in hours");
  estimate->add_option("--window", est.window, "Daily window HH:MM-HH:MM");
  estimate->add_option("--bins", est.bins, "Chi-square bins")->capture_default_str();

  AllocateArgs alloc;
  auto* allocate = app.add_subcommand("allocate", "Battery and ReGU allocation at one time");
  allocate->add_option("--config", alloc.config, "Scenario config")->required();
  allocate->add_option("--mode", alloc.mode, "ces or tes")
      ->check(CLI::IsMember({"ces", "tes"}))
      ->capture_default_str();
  allocate->add_option("--time", alloc.time_hours, "Hours since the start")->capture_default_str();
  allocate->add_option("--generation", alloc.generation, "Current generation per microgrid (kW)")
      ->delimiter(',');
  allocate->add_option("--prev-a", alloc.prev_a, "ReGU weights held before this step")->delimiter(',');

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo comparison of TES and CES");
  simulate->add_option("--config", sim.config, "Scenario config")->required();
  simulate->add_option("--paths", sim.paths, "Paths kept after filtering");
  simulate->add_option("--seed", sim.seed, "Root seed");
  simulate->add_option("--case-filter", sim.case_filter, "Terminal case, e.g. ge_lt, or all");
  simulate->add_option("--out", sim.out_dir, "Output directory")->capture_default_str();

  ValidateArgs val;
  auto* validate = app.add_subcommand("validate", "Run the acceptance checks");
  validate->add_option("--suite", val.suite, "oracle, stats, casestudy or all")
      ->check(CLI::IsMember({"oracle", "stats", "casestudy", "all"}))
      ->capture_default_str();
  validate->add_flag("--inject-fault", val.inject_fault, "Perturb the normal CDF by 1e-6");
  validate->add_flag("--json", val.json, "Emit results as JSON");
  validate->add_option("--seed", val.seed, "Validation seed");
  validate->add_option("--case-paths", val.case_paths, "Accepted paths per terminal case");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << tool_version() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front()) {
      err << "run with --help for usage of '" << sub->get_name() << "'\n";
    }
    return kInputError;
  }

  std::string command_line = "gridhedge";
  for (const auto& a : args) command_line += " " + a;

  if (*estimate) return cmd_estimate(est, out, err);
  if (*allocate) return cmd_allocate(alloc, max_nodes, out, err);
  if (*simulate) return cmd_simulate(sim, max_nodes, out, err, command_line);
  return cmd_validate(val, out, err);
}

}  // namespace gridhedge::cli
