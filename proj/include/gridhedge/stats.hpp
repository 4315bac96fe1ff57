#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace gridhedge {

struct KsResult {
  double statistic = 0.0;  // sup |F_a - F_b|, in [0, 1]
  std::size_t n = 0;
  std::size_t m = 0;
  double alpha = 0.05;
  double critical_value = 0.0;
  bool reject = false;  // statistic > critical_value
};

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic decision at level
/// alpha. Throws EmptySample.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

/// Asymptotic two-sample critical value c(alpha) sqrt((n + m) / (n m)) with
/// c(alpha) = sqrt(-ln(alpha / 2) / 2). No small-sample tables. Throws
/// InvalidAlpha outside (0, 1).
double ks_critical_value(std::size_t n, std::size_t m, double alpha);

struct BootstrapCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
};

/// Percentile bootstrap interval for the mean. Resample r draws from its own
/// RNG stream, so the result depends only on (sample, n_resamples, level,
/// seed). Throws EmptySample, or InvalidArgument for n_resamples < 100.
BootstrapCi bootstrap_ci(std::span<const double> sample, std::size_t n_resamples, double level,
                         std::uint64_t seed);

}  // namespace gridhedge
