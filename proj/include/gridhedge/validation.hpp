#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gridhedge/ces_allocator.hpp"

namespace gridhedge {

enum class Suite { Oracle, Stats, CaseStudy, All };

/// oracle | stats | casestudy | all
Suite parse_suite(const std::string& text);

struct CriterionResult {
  std::string id;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct ValidationOptions {
  bool inject_cdf_fault = false;  // mutation check: perturbs normal_cdf by 1e-6
  std::uint64_t seed = 20201;
  std::size_t case_paths = 10000;  // accepted paths per terminal case
  std::ostream* progress = nullptr;  // one line per finished criterion
};

std::vector<CriterionResult> run_validation(Suite suite, const ValidationOptions& options = {});

/// "PASS 1 ces_closed_form: ... (0.01 s)"
std::string format_result(const CriterionResult& r);

/// Normal CDF evaluated with 50 significant digits (boost multiprecision);
/// shares no code with normal_cdf.
double reference_normal_cdf(double x);

/// Zero-rate lognormal put E[max(D - P_T, 0)] from reference_normal_cdf.
double reference_put_value(double p, double d, double sigma, double tau);

/// RMS of (hedged portfolio - shortfall) at the horizon when the closed-form
/// CES allocation is rebalanced self-financingly `count` times, for each
/// count in `rebalance_counts`. All counts share the same physical-measure
/// Brownian paths on a grid of `fine_steps`, which each count must divide.
std::vector<double> ces_hedge_rms(const MicrogridSpec& spec, double p0, double horizon,
                                  double p_b, std::size_t fine_steps,
                                  const std::vector<std::size_t>& rebalance_counts,
                                  std::size_t n_paths, std::uint64_t seed);

}  // namespace gridhedge
