#include "gridhedge/stochastic_process.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "gridhedge/error.hpp"
#include "gridhedge/normal.hpp"
#include "gridhedge/parallel.hpp"
#include "gridhedge/random.hpp"

namespace gridhedge {

std::uint64_t derive_seed(std::uint64_t seed, const char* purpose) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char* c = purpose; *c; ++c) {
    h = (h ^ static_cast<unsigned char>(*c)) * 0x100000001b3ULL;
  }
  return splitmix64(seed ^ h);
}

void GbmParams::validate() const {
  if (!std::isfinite(mu) || !std::isfinite(sigma)) {
    throw Error(ErrorKind::InvalidArgument, "GBM parameters must be finite");
  }
  if (!(sigma > 0.0)) {
    throw Error(ErrorKind::DegenerateVolatility,
                "sigma must be > 0 (got " + std::to_string(sigma) + ")");
  }
}

CorrelationMatrix::CorrelationMatrix(Eigen::MatrixXd rho) : rho_(std::move(rho)) {
  if (rho_.rows() != rho_.cols() || rho_.rows() == 0) {
    throw Error(ErrorKind::InvalidArgument, "correlation matrix must be square and non-empty");
  }
  const auto n = rho_.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(rho_(i, i) - 1.0) > 1e-12) {
      throw Error(ErrorKind::InvalidArgument, "correlation matrix needs a unit diagonal");
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(rho_(i, j) - rho_(j, i)) > 1e-12) {
        throw Error(ErrorKind::InvalidArgument, "correlation matrix must be symmetric");
      }
    }
  }
}

CorrelationMatrix CorrelationMatrix::identity(std::size_t n) {
  return CorrelationMatrix(Eigen::MatrixXd::Identity(n, n));
}

CorrelationMatrix CorrelationMatrix::pair(double rho12) {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, rho12, rho12, 1.0;
  return CorrelationMatrix(std::move(m));
}

Eigen::MatrixXd cholesky_factor(const CorrelationMatrix& corr) {
  Eigen::LLT<Eigen::MatrixXd> llt(corr.matrix());
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "correlation matrix has a non-positive pivot");
  }
  Eigen::MatrixXd l = llt.matrixL();
  return l;
}

const char* to_string(Measure m) {
  return m == Measure::Physical ? "physical" : "transformed";
}

GbmSimulator::GbmSimulator(std::vector<GbmParams> params, const CorrelationMatrix& corr)
    : params_(std::move(params)) {
  if (params_.size() != corr.size()) {
    throw Error(ErrorKind::LengthMismatch, "one GBM parameter set per correlation row required");
  }
  for (const auto& p : params_) p.validate();
  chol_ = cholesky_factor(corr);
}

void GbmSimulator::simulate_path(std::span<const double> initial, double dt,
                                 std::size_t n_steps, Measure measure, std::uint64_t seed,
                                 std::uint64_t stream, std::span<double> out) const {
  const std::size_t n = params_.size();
  auto rng = make_stream(seed, stream);
  std::normal_distribution<double> gauss;
  std::vector<double> z(n), log_p(n), drift(n), vol(n);
  const double sqrt_dt = std::sqrt(dt);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = measure == Measure::Physical ? params_[i].mu : 0.0;
    drift[i] = (mu - 0.5 * params_[i].sigma * params_[i].sigma) * dt;
    vol[i] = params_[i].sigma * sqrt_dt;
    log_p[i] = std::log(initial[i]);
    out[i] = initial[i];
  }
  for (std::size_t s = 1; s <= n_steps; ++s) {
    for (auto& zi : z) zi = gauss(rng);
    for (std::size_t i = 0; i < n; ++i) {
      double w = 0.0;
      for (std::size_t j = 0; j <= i; ++j) w += chol_(i, j) * z[j];
      log_p[i] += drift[i] + vol[i] * w;
      out[s * n + i] = std::exp(log_p[i]);
    }
  }
}

PathEnsemble simulate_paths(std::span<const GbmParams> params, const CorrelationMatrix& corr,
                            std::span<const double> initial, double horizon,
                            std::size_t n_steps, std::size_t n_paths, std::uint64_t seed,
                            Measure measure) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw Error(ErrorKind::InvalidHorizon, "horizon must be > 0");
  }
  if (n_steps < 1) throw Error(ErrorKind::InvalidArgument, "n_steps must be >= 1");
  if (initial.size() != params.size()) {
    throw Error(ErrorKind::LengthMismatch, "initial condition length differs from parameter count");
  }
  for (double p0 : initial) {
    if (!(p0 > 0.0)) throw Error(ErrorKind::NonPositiveGeneration, "initial generation must be > 0");
  }
  GbmSimulator sim(std::vector<GbmParams>(params.begin(), params.end()), corr);

  PathEnsemble ens;
  ens.n_paths = n_paths;
  ens.n_steps = n_steps;
  ens.n_assets = params.size();
  ens.dt = horizon / static_cast<double>(n_steps);
  ens.measure = measure;
  ens.seed = seed;
  const std::size_t stride = (n_steps + 1) * ens.n_assets;
  ens.values.resize(n_paths * stride);
  parallel_for(n_paths, [&](std::size_t p) {
    sim.simulate_path(initial, ens.dt, n_steps, measure, seed, p,
                      std::span<double>(ens.values.data() + p * stride, stride));
  });
  return ens;
}

GbmParams MleFit::params() const {
  if (degenerate) {
    throw Error(ErrorKind::DegenerateVolatility, "fitted volatility is zero (constant series)");
  }
  return GbmParams{mu, sigma};
}

MleFit estimate_gbm_mle(const std::vector<std::vector<double>>& segments, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "sampling interval must be > 0");
  MleFit fit;
  fit.dt = dt;
  for (const auto& seg : segments) {
    for (double v : seg) {
      if (!(v > 0.0)) {
        throw Error(ErrorKind::NonPositiveSample, "series contains a non-positive value");
      }
    }
    for (std::size_t k = 0; k + 1 < seg.size(); ++k) {
      fit.log_returns.push_back(std::log(seg[k + 1] / seg[k]));
    }
  }
  const std::size_t n = fit.log_returns.size();
  if (n < 2) throw Error(ErrorKind::SeriesTooShort, "need at least 3 observations");

  double mean = 0.0;
  for (double x : fit.log_returns) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : fit.log_returns) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n);

  fit.sigma = std::sqrt(var / dt);
  fit.mu = mean / dt + 0.5 * fit.sigma * fit.sigma;
  // Rounding leaves ~1e-17 variance on a constant series.
  fit.degenerate = var <= 1e-300 || fit.sigma < 1e-12;
  if (fit.degenerate) fit.sigma = 0.0;
  return fit;
}

MleFit estimate_gbm_mle(std::span<const double> series, double dt) {
  return estimate_gbm_mle(std::vector<std::vector<double>>{{series.begin(), series.end()}}, dt);
}

double chi_square_sf(double statistic, double dof) {
  if (!(dof > 0.0)) throw Error(ErrorKind::InvalidArgument, "dof must be > 0");
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

GofResult chi_square_gof(std::span<const double> log_returns, const GbmParams& params, double dt,
                         int n_bins) {
  if (n_bins < 4) {
    throw Error(ErrorKind::TooFewBins, "need n_bins >= 4 so that dof = n_bins - 3 >= 1");
  }
  if (log_returns.empty()) throw Error(ErrorKind::EmptySample, "no log-returns to test");
  params.validate();

  const double mean = (params.mu - 0.5 * params.sigma * params.sigma) * dt;
  const double sd = params.sigma * std::sqrt(dt);
  std::vector<double> edges(static_cast<std::size_t>(n_bins - 1));
  for (int k = 1; k < n_bins; ++k) {
    edges[static_cast<std::size_t>(k - 1)] =
        mean + sd * normal_quantile(static_cast<double>(k) / n_bins);
  }
  std::vector<double> observed(static_cast<std::size_t>(n_bins), 0.0);
  for (double x : log_returns) {
    const auto bin = std::upper_bound(edges.begin(), edges.end(), x) - edges.begin();
    observed[static_cast<std::size_t>(bin)] += 1.0;
  }
  const double expected = static_cast<double>(log_returns.size()) / n_bins;
  GofResult r;
  for (double o : observed) r.statistic += (o - expected) * (o - expected) / expected;
  r.dof = n_bins - 3;
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

}  // namespace gridhedge
