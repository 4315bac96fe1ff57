#include <doctest.h>

#include <cmath>
#include <vector>

#include "gridhedge/ces_allocator.hpp"
#include "gridhedge/error.hpp"
#include "gridhedge/stochastic_process.hpp"
#include "gridhedge/validation.hpp"

using namespace gridhedge;

namespace {

MicrogridSpec spec(double d, double sigma, double mu = 0.006) { return {d, GbmParams{mu, sigma}, ""}; }

}  // namespace

TEST_CASE("at-the-money allocation against the reference cdf") {
  const auto a = ces_allocation(20.0, spec(20.0, 0.03), 0.0, 5.0, 1.0);
  const double d_plus = 0.5 * 0.03 * 0.03 * 5.0 / (0.03 * std::sqrt(5.0));
  CHECK(d_plus == doctest::Approx(0.033541).epsilon(1e-5));
  CHECK(a.a_hat == doctest::Approx(-reference_normal_cdf(-d_plus)).epsilon(1e-14));
  CHECK(a.b_hat == doctest::Approx(20.0 * reference_normal_cdf(d_plus)).epsilon(1e-14));
  CHECK(a.a_hat == doctest::Approx(-0.48662).epsilon(1e-5));
  CHECK(a.b_hat == doctest::Approx(10.2676).epsilon(1e-5));
  CHECK(a.value_hat == doctest::Approx(0.53513).epsilon(1e-4));
  CHECK(ces_portfolio_value(20.0, spec(20.0, 0.03), 0.0, 5.0) ==
        doctest::Approx(reference_put_value(20.0, 20.0, 0.03, 5.0)).epsilon(1e-13));
}

TEST_CASE("battery units scale with 1/p_b") {
  const auto one = ces_allocation(18.0, spec(20.0, 0.03), 1.0, 5.0, 1.0);
  const auto two = ces_allocation(18.0, spec(20.0, 0.03), 1.0, 5.0, 2.0);
  CHECK(two.b_hat == doctest::Approx(one.b_hat / 2.0));
  CHECK(two.value_hat == doctest::Approx(one.value_hat));
}

TEST_CASE("deep surplus and near-terminal deficit") {
  const auto surplus = ces_allocation(1e9, spec(20.0, 0.03), 0.0, 5.0, 1.0);
  CHECK(surplus.a_hat == doctest::Approx(0.0));
  CHECK(surplus.b_hat == doctest::Approx(0.0));

  const auto deficit = ces_allocation(10.0, spec(20.0, 0.03), 5.0 - 1e-6, 5.0, 1.0);
  CHECK(deficit.a_hat == doctest::Approx(-1.0));
  CHECK(deficit.b_hat == doctest::Approx(20.0));
}

TEST_CASE("terminal rule and time bounds") {
  const auto at_d = ces_allocation(20.0, spec(20.0, 0.03), 5.0, 5.0, 1.0);
  CHECK(at_d.a_hat == 0.0);
  CHECK(at_d.b_hat == 0.0);
  const auto short_ = ces_allocation(19.0, spec(20.0, 0.03), 5.0, 5.0, 1.0);
  CHECK(short_.a_hat == -1.0);
  CHECK(short_.b_hat == 20.0);
  CHECK(short_.value_hat == doctest::Approx(1.0));
  CHECK_THROWS_AS(ces_allocation(20.0, spec(20.0, 0.03), 5.5, 5.0, 1.0), Error);
  CHECK_THROWS_AS(ces_allocation(20.0, spec(20.0, 0.03), -0.1, 5.0, 1.0), Error);
}

TEST_CASE("terminal shortfall") {
  CHECK(terminal_payoff_ces(25.0, 20.0) == 0.0);
  CHECK(terminal_payoff_ces(20.0, 20.0) == 0.0);
  CHECK(terminal_payoff_ces(15.0, 25.0) == 10.0);
}

TEST_CASE("value bounds on a grid") {
  const auto s = spec(20.0, 0.08);
  for (double p = 1.0; p <= 60.0; p += 0.5) {
    for (double t : {0.0, 2.5, 4.9}) {
      const double v = ces_portfolio_value(p, s, t, 5.0);
      CHECK(v >= std::max(20.0 - p, 0.0) - 1e-12);
      CHECK(v <= 20.0);
    }
  }
  CHECK(ces_portfolio_value(20.0, spec(20.0, 30.0), 0.0, 5.0) <= 20.0);
  CHECK(ces_portfolio_value(20.0, spec(20.0, 30.0), 0.0, 5.0) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("closed form matches transformed-measure Monte Carlo") {
  const std::vector<GbmParams> params{{0.006, 0.03}};
  const double init[] = {20.0};
  const auto e = simulate_paths(params, CorrelationMatrix::identity(1), init, 5.0, 1, 1000000, 2024,
                                Measure::Transformed);
  double s = 0.0, s2 = 0.0;
  for (std::size_t p = 0; p < e.n_paths; ++p) {
    const double x = terminal_payoff_ces(e.at(p, 1, 0), 20.0);
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(e.n_paths);
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / (n - 1));
  CHECK(std::abs(mean - ces_portfolio_value(20.0, spec(20.0, 0.03), 0.0, 5.0)) < 3 * se);
}

TEST_CASE("total battery is a sum of per-microgrid units") {
  const std::vector<MicrogridSpec> one{spec(20.0, 0.03)};
  const double p1[] = {20.0};
  CHECK(ces_total_battery(p1, one, 0.0, 5.0, 1.0) ==
        doctest::Approx(ces_allocation(20.0, one[0], 0.0, 5.0, 1.0).b_hat));

  const std::vector<MicrogridSpec> twins{spec(20.0, 0.03), spec(20.0, 0.03)};
  const double p2[] = {20.0, 20.0};
  CHECK(ces_total_battery(p2, twins, 0.0, 5.0, 1.0) == doctest::Approx(2 * 10.2676).epsilon(1e-5));

  const std::vector<MicrogridSpec> pair{spec(20.0, 0.03), spec(25.0, 0.04, 0.005)};
  const double p3[] = {20.0, 25.0};
  const double expect = 20.0 * reference_normal_cdf(0.00225 / 0.0670820393249937) +
                        25.0 * reference_normal_cdf(0.004 / 0.0894427190999916);
  CHECK(ces_total_battery(p3, pair, 0.0, 5.0, 1.0) == doctest::Approx(expect).epsilon(1e-12));
}
