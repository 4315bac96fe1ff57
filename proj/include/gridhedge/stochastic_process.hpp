#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gridhedge {

/// Drift (per hour) and volatility (per sqrt hour) of one microgrid's
/// renewable output, dP = mu P dt + sigma P dW.
struct GbmParams {
  double mu = 0.0;
  double sigma = 0.0;

  /// Market-price-of-risk style ratio mu/sigma used by the measure change.
  double eta() const { return mu / sigma; }

  /// Throws DegenerateVolatility for sigma <= 0, InvalidArgument for
  /// non-finite values.
  void validate() const;
};

/// Symmetric, unit-diagonal, positive definite correlation of the Wiener
/// increments driving each microgrid.
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(Eigen::MatrixXd rho);

  static CorrelationMatrix identity(std::size_t n);
  /// Two-asset convenience constructor.
  static CorrelationMatrix pair(double rho12);

  std::size_t size() const { return static_cast<std::size_t>(rho_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return rho_(i, j); }
  const Eigen::MatrixXd& matrix() const { return rho_; }

 private:
  Eigen::MatrixXd rho_;
};

/// Lower-triangular L with L L^T = rho. Throws NotPositiveDefinite.
Eigen::MatrixXd cholesky_factor(const CorrelationMatrix& corr);

enum class Measure { Physical, Transformed };

const char* to_string(Measure m);

/// Simulated generation, laid out path-major: values[(path * (n_steps + 1)
/// + step) * n_assets + asset]. Step 0 is the initial condition.
struct PathEnsemble {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  std::size_t n_assets = 0;
  double dt = 0.0;
  Measure measure = Measure::Physical;
  std::uint64_t seed = 0;
  std::vector<double> values;

  double at(std::size_t path, std::size_t step, std::size_t asset) const {
    return values[(path * (n_steps + 1) + step) * n_assets + asset];
  }
  std::span<const double> state(std::size_t path, std::size_t step) const {
    return {values.data() + (path * (n_steps + 1) + step) * n_assets, n_assets};
  }
  /// All assets' values for one path, steps 0..n_steps.
  std::span<const double> path(std::size_t path) const {
    return {values.data() + path * (n_steps + 1) * n_assets, (n_steps + 1) * n_assets};
  }
};

/// Exact log-space GBM stepping for a fixed set of microgrids.
class GbmSimulator {
 public:
  GbmSimulator(std::vector<GbmParams> params, const CorrelationMatrix& corr);

  std::size_t n_assets() const { return params_.size(); }

  /// Writes one path (steps 0..n_steps, asset-minor) into `out`, drawing
  /// from stream `stream` of master seed `seed`.
  void simulate_path(std::span<const double> initial, double dt, std::size_t n_steps,
                     Measure measure, std::uint64_t seed, std::uint64_t stream,
                     std::span<double> out) const;

 private:
  std::vector<GbmParams> params_;
  Eigen::MatrixXd chol_;
};

PathEnsemble simulate_paths(std::span<const GbmParams> params, const CorrelationMatrix& corr,
                            std::span<const double> initial, double horizon,
                            std::size_t n_steps, std::size_t n_paths, std::uint64_t seed,
                            Measure measure);

/// Maximum-likelihood GBM fit. `degenerate` is set (and sigma is 0) when the
/// log-returns have zero variance; params() then throws DegenerateVolatility.
struct MleFit {
  double mu = 0.0;
  double sigma = 0.0;
  double dt = 0.0;
  bool degenerate = false;
  std::vector<double> log_returns;

  GbmParams params() const;
};

/// sigma^2 = var(x)/dt with divisor n (the true MLE, biased low by n/(n-1)),
/// mu = mean(x)/dt + sigma^2/2, x_k = ln(P_{k+1}/P_k).
MleFit estimate_gbm_mle(std::span<const double> series, double dt);

/// Same estimator on several disjoint segments (e.g. one daily window each);
/// returns are never formed across segment boundaries.
MleFit estimate_gbm_mle(const std::vector<std::vector<double>>& segments, double dt);

struct GofResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

/// Pearson chi-square test of log-returns against the fitted normal law
/// N((mu - sigma^2/2) dt, sigma^2 dt), using n_bins equal-probability bins.
/// dof = n_bins - 3 (two fitted parameters).
GofResult chi_square_gof(std::span<const double> log_returns, const GbmParams& params, double dt,
                         int n_bins);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, double dof);

}  // namespace gridhedge
