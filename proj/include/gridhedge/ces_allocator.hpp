#pragma once

#include <span>
#include <string>

#include "gridhedge/stochastic_process.hpp"

namespace gridhedge {

/// One microgrid's critical demand (kW, due at the horizon) and generation
/// dynamics.
struct MicrogridSpec {
  double demand_kw = 0.0;
  GbmParams gbm;
  std::string label;
};

/// Conventional-system holding for one microgrid: ReGU weight a_hat in
/// [-1, 0], battery units b_hat in [0, D/p_b] (continuous), and the
/// resulting portfolio power value_hat = a_hat P + b_hat p_b.
struct CesAllocation {
  double a_hat = 0.0;
  double b_hat = 0.0;
  double value_hat = 0.0;
};

/// Shortfall the portfolio must cover at the horizon: max(D - P, 0), with
/// P == D counted as surplus.
double terminal_payoff_ces(double p_g_tf, double demand_kw);

/// Closed-form demand-meeting allocation at time t < t_f:
///   a_hat = -Phi(d-),  b_hat = (D/p_b) Phi(d+),
///   d+- = (ln(D/P) +- sigma^2 tau / 2) / (sigma sqrt(tau)),  tau = t_f - t.
/// At t == t_f the terminal rule applies (a_hat in {0,-1}, b_hat in {0, D/p_b});
/// t > t_f or t < 0 throws TimeOutOfRange.
CesAllocation ces_allocation(double p_g, const MicrogridSpec& spec, double t, double t_f,
                             double p_b);

/// D Phi(d+) - P Phi(d-): the zero-rate lognormal put on P struck at D.
double ces_portfolio_value(double p_g, const MicrogridSpec& spec, double t, double t_f);

/// Sum of b_hat over microgrids.
double ces_total_battery(std::span<const double> p_g, std::span<const MicrogridSpec> specs,
                         double t, double t_f, double p_b);

}  // namespace gridhedge
