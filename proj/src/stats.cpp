#include "gridhedge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gridhedge/error.hpp"
#include "gridhedge/parallel.hpp"
#include "gridhedge/random.hpp"

namespace gridhedge {

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::EmptySample, "KS test needs two nonempty samples");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());

  // Walk the pooled support; ties are consumed on both sides before comparing.
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }

  KsResult r;
  r.statistic = d;
  r.n = sa.size();
  r.m = sb.size();
  r.alpha = alpha;
  r.critical_value = ks_critical_value(r.n, r.m, alpha);
  r.reject = r.statistic > r.critical_value;
  return r;
}

double ks_critical_value(std::size_t n, std::size_t m, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidAlpha, "alpha must lie in (0,1)");
  if (n == 0 || m == 0) throw Error(ErrorKind::EmptySample, "sample sizes must be >= 1");
  const double c = std::sqrt(-0.5 * std::log(0.5 * alpha));
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return c * std::sqrt((dn + dm) / (dn * dm));
}

BootstrapCi bootstrap_ci(std::span<const double> sample, std::size_t n_resamples, double level,
                         std::uint64_t seed) {
  if (sample.empty()) throw Error(ErrorKind::EmptySample, "bootstrap needs a nonempty sample");
  if (n_resamples < 100) throw Error(ErrorKind::InvalidArgument, "need at least 100 resamples");
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "confidence level must lie in (0,1)");
  }
  const std::size_t n = sample.size();
  double mean = 0.0;
  for (double x : sample) mean += x;
  mean /= static_cast<double>(n);

  std::vector<double> means(n_resamples);
  parallel_for(n_resamples, [&](std::size_t r) {
    auto rng = make_stream(seed, r);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += sample[pick(rng)];
    means[r] = s / static_cast<double>(n);
  });
  std::sort(means.begin(), means.end());

  // Linear interpolation between order statistics.
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n_resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, n_resamples - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  BootstrapCi ci;
  ci.mean = mean;
  ci.level = level;
  ci.n_resamples = n_resamples;
  ci.seed = seed;
  ci.lo = std::min(quantile(0.5 * (1.0 - level)), mean);
  ci.hi = std::max(quantile(0.5 * (1.0 + level)), mean);
  return ci;
}

}  // namespace gridhedge
