#include "gridhedge/ces_allocator.hpp"

#include <cmath>

#include "gridhedge/error.hpp"
#include "gridhedge/normal.hpp"

namespace gridhedge {
namespace {

struct Moneyness {
  double d_plus;
  double d_minus;
};

void check_inputs(double p_g, const MicrogridSpec& spec, double t, double t_f) {
  if (!(p_g > 0.0)) throw Error(ErrorKind::NonPositiveGeneration, "generation must be > 0 kW");
  if (!(spec.demand_kw > 0.0)) throw Error(ErrorKind::InvalidArgument, "demand must be > 0 kW");
  spec.gbm.validate();
  if (!(t >= 0.0) || !(t <= t_f)) {
    throw Error(ErrorKind::TimeOutOfRange, "time out of range: need 0 <= t <= t_f");
  }
}

Moneyness moneyness(double p_g, const MicrogridSpec& spec, double tau) {
  const double s = spec.gbm.sigma;
  const double sd = s * std::sqrt(tau);
  const double log_ratio = std::log(spec.demand_kw / p_g);
  const double half_var = 0.5 * s * s * tau;
  return {(log_ratio + half_var) / sd, (log_ratio - half_var) / sd};
}

}  // namespace

double terminal_payoff_ces(double p_g_tf, double demand_kw) {
  return p_g_tf >= demand_kw ? 0.0 : demand_kw - p_g_tf;
}

CesAllocation ces_allocation(double p_g, const MicrogridSpec& spec, double t, double t_f,
                             double p_b) {
  check_inputs(p_g, spec, t, t_f);
  if (!(p_b > 0.0)) throw Error(ErrorKind::InvalidArgument, "battery unit power must be > 0");
  CesAllocation out;
  const double tau = t_f - t;
  if (tau <= 0.0) {
    const bool deficit = p_g < spec.demand_kw;
    out.a_hat = deficit ? -1.0 : 0.0;
    out.b_hat = deficit ? spec.demand_kw / p_b : 0.0;
  } else {
    const auto m = moneyness(p_g, spec, tau);
    out.a_hat = -normal_cdf(m.d_minus);
    out.b_hat = spec.demand_kw / p_b * normal_cdf(m.d_plus);
  }
  out.value_hat = out.a_hat * p_g + out.b_hat * p_b;
  return out;
}

double ces_portfolio_value(double p_g, const MicrogridSpec& spec, double t, double t_f) {
  check_inputs(p_g, spec, t, t_f);
  const double tau = t_f - t;
  if (tau <= 0.0) return terminal_payoff_ces(p_g, spec.demand_kw);
  const auto m = moneyness(p_g, spec, tau);
  return spec.demand_kw * normal_cdf(m.d_plus) - p_g * normal_cdf(m.d_minus);
}

double ces_total_battery(std::span<const double> p_g, std::span<const MicrogridSpec> specs,
                         double t, double t_f, double p_b) {
  if (p_g.size() != specs.size()) {
    throw Error(ErrorKind::LengthMismatch, "one generation value per microgrid required");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    total += ces_allocation(p_g[i], specs[i], t, t_f, p_b).b_hat;
  }
  return total;
}

}  // namespace gridhedge
