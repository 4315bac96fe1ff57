#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gridhedge/grid.hpp"
#include "gridhedge/tes_lattice.hpp"

namespace gridhedge {

/// Terminal comparison of one microgrid's generation with its demand.
/// Equality counts as AtLeast (surplus).
enum class Comparator { AtLeast, Below };

using CaseLabel = std::vector<Comparator>;

/// "ge_lt" style label; parse accepts '_' or ',' separators and the
/// spellings ge/>= and lt/<.
std::string to_string(const CaseLabel& label);
CaseLabel parse_case_label(const std::string& text);

CaseLabel classify_terminal(std::span<const double> terminal_pg, std::span<const double> demands);

/// How the transactive portfolio is settled at the horizon itself.
enum class TesTerminalRule {
  Limit,  // a_i = -1, b = sum D / p_b on pooled shortfall, else zero
  Carry,  // keep the last ReGU weights; b = (V - a.P) / p_b
};

struct ScenarioConfig {
  GridEnsemble grid;
  std::vector<double> initial_kw;
  double horizon_hours = 5.0;
  std::size_t rebalance_steps = 5;
  /// Paths kept per study (after the case filter, if any).
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;
  std::optional<CaseLabel> case_filter;
  std::size_t bootstrap_resamples = 10000;
  double ci_level = 0.95;
  TesTerminalRule tes_terminal = TesTerminalRule::Limit;
  LatticeEngine engine = LatticeEngine::Recombining;
  std::uint64_t max_nodes = kDefaultMaxNodes;

  void validate() const;
};

/// The parameter set of the two-microgrid case studies.
ScenarioConfig case_study_config();

struct MetricSeries {
  std::vector<double> mean;
  std::vector<double> lo;
  std::vector<double> hi;
};

struct CaseResult {
  std::vector<double> times;  // hours, rebalance_steps + 1 entries
  MetricSeries b_tes, b_ces, v_tes, v_ces, savings_pct;
  std::vector<std::vector<double>> pg_mean;  // [asset][step]
  std::vector<std::vector<double>> pg_std;
  double overall_savings_pct = 0.0;
  std::size_t n_accepted = 0;
  std::size_t n_candidates = 0;
  /// Terminal-case counts over every simulated candidate, keyed by label.
  std::map<std::string, std::size_t> case_counts;
  std::string case_name;  // filter label, or "all"
};

struct SavingsSeries {
  std::vector<double> pct;
  double overall = 0.0;  // unweighted mean over time rows
};

/// Pointwise 100 (1 - b / b_hat); steps with b_hat == 0 report 0.
SavingsSeries battery_savings(std::span<const double> tes_b, std::span<const double> ces_b);

/// Per-path allocations along one generation trajectory (steps 0..N,
/// asset-minor layout as in PathEnsemble::path).
struct PathAllocations {
  std::vector<double> b_tes, b_ces, v_tes, v_ces, savings_pct;
};

PathAllocations evaluate_path(const ScenarioConfig& config, const LatticeStepModel& model,
                              std::span<const double> path);

/// Simulates physical-measure paths, keeps those matching the case filter,
/// rebalances both systems at every step, and aggregates means and bootstrap
/// CIs. Throws InsufficientPaths when the filter keeps no path.
CaseResult run_case_study(const ScenarioConfig& config);

/// `t_hours,metric,case,mean,ci_lo,ci_hi` rows.
void write_results_csv(std::ostream& out, const CaseResult& result, bool header = true);

}  // namespace gridhedge
