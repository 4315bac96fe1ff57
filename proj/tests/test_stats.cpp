#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gridhedge/error.hpp"
#include "gridhedge/random.hpp"
#include "gridhedge/stats.hpp"

using namespace gridhedge;

TEST_CASE("KS statistic extremes") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  CHECK(ks_two_sample(a, a).statistic == 0.0);
  const std::vector<double> hi{10, 11, 12};
  CHECK(ks_two_sample(a, hi).statistic == 1.0);
  CHECK(ks_two_sample(a, hi).reject);
  CHECK_THROWS_AS(ks_two_sample(a, std::vector<double>{}), Error);
}

TEST_CASE("KS handles ties across samples") {
  const std::vector<double> a{1, 1, 2, 2}, b{1, 2, 2, 2};
  // F_a(1) = 0.5, F_b(1) = 0.25; equal from 2 onwards.
  CHECK(ks_two_sample(a, b).statistic == doctest::Approx(0.25));
}

TEST_CASE("KS critical values") {
  CHECK(ks_critical_value(10000, 10000, 0.05) == doctest::Approx(0.0192).epsilon(0.005));
  CHECK(ks_critical_value(100, 100, 0.05) == doctest::Approx(1.3581 * std::sqrt(0.02)).epsilon(1e-4));
  CHECK(ks_critical_value(100000000, 100000000, 0.05) < 2e-4);
  CHECK_THROWS_AS(ks_critical_value(10, 10, 1.0), Error);
  CHECK_THROWS_AS(ks_critical_value(10, 10, 0.0), Error);
}

TEST_CASE("same-law KS statistic is usually below the critical value") {
  int below = 0;
  for (int k = 0; k < 100; ++k) {
    auto rng = make_stream(404, k);
    std::lognormal_distribution<double> law(std::log(20.0), 0.067);
    std::vector<double> a(10000), b(10000);
    for (auto& x : a) x = law(rng);
    for (auto& x : b) x = law(rng);
    below += ks_two_sample(a, b).statistic < 0.0192;
  }
  CHECK(below >= 88);
}

TEST_CASE("bootstrap of a constant sample collapses") {
  const std::vector<double> c(25, 4.2);
  const auto ci = bootstrap_ci(c, 200, 0.95, 1);
  CHECK(ci.mean == doctest::Approx(4.2));
  CHECK(ci.lo == doctest::Approx(4.2));
  CHECK(ci.hi == doctest::Approx(4.2));
  const std::vector<double> one{3.0};
  CHECK(bootstrap_ci(one, 100, 0.95, 1).hi == 3.0);
}

TEST_CASE("bootstrap width follows the CLT") {
  auto rng = make_stream(5, 0);
  std::normal_distribution<double> z;
  std::vector<double> x(10000);
  for (auto& v : x) v = z(rng);
  const auto ci = bootstrap_ci(x, 2000, 0.95, 9);
  CHECK(ci.hi - ci.lo == doctest::Approx(2 * 1.96 / 100.0).epsilon(0.1));
  CHECK(ci.lo <= ci.mean);
  CHECK(ci.mean <= ci.hi);
}

TEST_CASE("bootstrap coverage is near nominal") {
  int covered = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    auto rng = make_stream(606, t);
    std::exponential_distribution<double> law(0.5);
    std::vector<double> x(200);
    for (auto& v : x) v = law(rng);
    const auto ci = bootstrap_ci(x, 500, 0.95, stream_seed(707, t));
    covered += ci.lo <= 2.0 && 2.0 <= ci.hi;
  }
  CHECK(covered >= static_cast<int>(0.93 * trials));
  CHECK(covered <= static_cast<int>(0.97 * trials));
}

TEST_CASE("bootstrap is reproducible and validates inputs") {
  const std::vector<double> x{1, 5, 2, 8, 3, 9, 4};
  const auto a = bootstrap_ci(x, 300, 0.9, 42);
  const auto b = bootstrap_ci(x, 300, 0.9, 42);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK_THROWS_AS(bootstrap_ci(x, 99, 0.9, 1), Error);
  CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{}, 100, 0.9, 1), Error);
  CHECK_THROWS_AS(bootstrap_ci(x, 100, 1.0, 1), Error);
}
