#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gridhedge/error.hpp"
#include "gridhedge/grid.hpp"
#include "gridhedge/random.hpp"
#include "gridhedge/tes_lattice.hpp"

using namespace gridhedge;

namespace {

GridEnsemble one_grid(double sigma, double demand = 20.0) {
  GridEnsemble g;
  g.microgrids = {{demand, GbmParams{0.006, sigma}, "a"}};
  g.corr = CorrelationMatrix::identity(1);
  return g;
}

GridEnsemble two_grid(double s1 = 0.03, double s2 = 0.04, double rho = 0.6) {
  GridEnsemble g;
  g.microgrids = {{20.0, GbmParams{0.006, s1}, "a"}, {25.0, GbmParams{0.005, s2}, "b"}};
  g.corr = CorrelationMatrix::pair(rho);
  return g;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("single-asset calibration in closed form") {
  const auto m = calibrate_step_model(one_grid(0.03), 1.0);
  const double h = std::sqrt(0.0009 + 0.0009 * 0.0009 / 4.0);
  CHECK(m.log_step[0] == doctest::Approx(0.0300034).epsilon(1e-6));
  CHECK(m.log_step[0] == doctest::Approx(h).epsilon(1e-14));
  CHECK(m.up[0] * m.down[0] == doctest::Approx(1.0));
  CHECK(m.branch_probs[0] == doctest::Approx(0.5 * (1.0 - 0.0009 / (2.0 * h))).epsilon(1e-14));
  CHECK(m.branch_probs[0] == doctest::Approx(0.49250).epsilon(1e-4));
  CHECK(std::accumulate(m.branch_probs.begin(), m.branch_probs.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("two-asset calibration satisfies every moment equation") {
  const auto g = two_grid();
  const auto m = calibrate_step_model(g, 1.0);
  REQUIRE(m.n_branches() == 4);
  CHECK(max_abs(moment_residuals(m, g)) < 1e-10);
  for (double p : m.branch_probs) CHECK((p >= 0.0 && p <= 1.0));
  CHECK(m.branch_probs[0] == doctest::Approx(0.3912).epsilon(1e-3));
  CHECK(m.branch_probs[3] == doctest::Approx(0.4087).epsilon(1e-3));
  // branch 1 is (up, down): asset 0 up, asset 1 down
  CHECK(m.branch_factors(1, 0) == doctest::Approx(m.up[0]));
  CHECK(m.branch_factors(1, 1) == doctest::Approx(m.down[1]));
}

TEST_CASE("three assets use the minimum-norm feasible measure") {
  GridEnsemble g;
  g.microgrids = {{10.0, {0.0, 0.03}, ""}, {10.0, {0.0, 0.05}, ""}, {10.0, {0.0, 0.02}, ""}};
  Eigen::MatrixXd rho(3, 3);
  rho << 1, 0.3, -0.2, 0.3, 1, 0.1, -0.2, 0.1, 1;
  g.corr = CorrelationMatrix(rho);
  const auto m = calibrate_step_model(g, 1.0);
  CHECK(m.n_branches() == 8);
  CHECK(max_abs(moment_residuals(m, g)) < 1e-10);
}

TEST_CASE("infeasible calibration suggests a smaller step") {
  try {
    calibrate_step_model(two_grid(0.01, 0.1, 0.99), 1.0);
    FAIL("expected InfeasibleCalibration");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InfeasibleCalibration);
    const std::string what = e.what();
    CHECK(what.find("P_") != std::string::npos);
    CHECK(what.find("try dt <=") != std::string::npos);
  }
}

TEST_CASE("tree shape and probability mass") {
  const auto m = calibrate_step_model(two_grid(), 1.0);
  const double root[] = {20.0, 25.0};
  auto t0 = forward_propagate(root, m, 0);
  CHECK(t0.size() == 1);
  CHECK(t0.path_prob(0) == 1.0);

  auto t2 = forward_propagate(root, m, 2);
  CHECK(t2.leaves().size() == 16);
  CHECK(t2.size() == 21);

  auto t5 = forward_propagate(root, m, 5);
  double mass = 0.0;
  for (const auto& leaf : t5.leaves()) mass += leaf.path_prob;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(t5.parent(t5.first_child(7) + 2) == 7);

  CHECK_THROWS_AS(forward_propagate(root, m, 12, 1'000'000), Error);
}

TEST_CASE("pooled terminal shortfall nets across microgrids") {
  const double d[] = {20.0, 25.0};
  const double surplus[] = {25.0, 30.0}, netted[] = {25.0, 18.0}, both[] = {15.0, 20.0};
  CHECK(tes_terminal_payoff(surplus, d) == 0.0);
  CHECK(tes_terminal_payoff(netted, d) == doctest::Approx(2.0));
  CHECK(tes_terminal_payoff(both, d) == doctest::Approx(10.0));
}

TEST_CASE("backpropagation") {
  const auto g = two_grid();
  const auto m = calibrate_step_model(g, 1.0);
  const double root[] = {20.0, 25.0};

  auto tree = forward_propagate(root, m, 4);
  const double tiny[] = {1e-3, 1e-3};
  CHECK(backpropagate(tree, tiny).root_value == 0.0);

  const auto d = g.demands();
  const auto r = backpropagate(tree, d);
  double direct = 0.0;
  for (const auto& leaf : tree.leaves()) direct += leaf.path_prob * tes_terminal_payoff(leaf.pg, d);
  CHECK(r.root_value == doctest::Approx(direct).epsilon(1e-9));
  CHECK(r.first_level.size() == 4);

  const double wrong[] = {20.0};
  CHECK_THROWS_AS(backpropagate(tree, wrong), Error);
}

TEST_CASE("recombining lattice reproduces the reference tree") {
  for (double rho : {-0.5, 0.0, 0.6}) {
    const auto g = two_grid(0.03, 0.04, rho);
    const auto m = calibrate_step_model(g, 1.0);
    const double root[] = {21.0, 23.0};
    for (std::size_t n : {0, 1, 2, 5}) {
      auto tree = forward_propagate(root, m, n);
      const auto ref = backpropagate(tree, g.demands());
      const auto fast = value_recombining(root, m, g.demands(), n);
      CHECK(fast.root_value == doctest::Approx(ref.root_value).epsilon(1e-12));
      REQUIRE(fast.first_level.size() == ref.first_level.size());
      for (std::size_t k = 0; k < ref.first_level.size(); ++k) {
        CHECK(fast.first_level[k].value == doctest::Approx(ref.first_level[k].value).epsilon(1e-12));
        CHECK(fast.first_level[k].pg[1] == doctest::Approx(ref.first_level[k].pg[1]));
      }
    }
  }
}

TEST_CASE("single-asset lattice converges to the closed form") {
  const auto g = one_grid(0.03);
  const auto m = calibrate_step_model(g, 5.0 / 200.0);
  const double root[] = {20.0};
  const double v = value_recombining(root, m, g.demands(), 200).root_value;
  CHECK(std::abs(v - 0.53513) / 0.53513 < 0.01);
}

TEST_CASE("one-step replication, hand solve") {
  // Child states from the sigma = 0.03 calibration at P = 20.
  const double up = 20.606, down = 19.412, v_down = 0.588;
  std::vector<TreeNode> kids{{{up}, 0.0, 0.5, 0.5, 1}, {{down}, v_down, 0.5, 0.5, 2}};
  const double none[] = {0.0};
  const auto r = compute_resources(0.3, kids, none, 1.0);
  const double a = (0.0 - v_down) / (up - down);
  CHECK(a == doctest::Approx(-0.4925).epsilon(1e-3));
  CHECK(r.a[0] == doctest::Approx(a).epsilon(1e-12));
  CHECK(r.b == doctest::Approx(-a * up).epsilon(1e-12));
  CHECK(r.b == doctest::Approx(10.149).epsilon(5e-4));
  CHECK(r.residual < 1e-12);

  std::vector<TreeNode> zero{{{up}, 0.0, 0.5, 0.5, 1}, {{down}, 0.0, 0.5, 0.5, 2}};
  const auto z = compute_resources(0.0, zero, none, 1.0);
  CHECK(std::abs(z.a[0]) < 1e-14);
  CHECK(std::abs(z.b) < 1e-14);
}

TEST_CASE("two-asset replication equals the normal-equations solution") {
  const auto g = two_grid();
  const auto m = calibrate_step_model(g, 1.0);
  const double root[] = {19.0, 26.0};
  const auto val = value_recombining(root, m, g.demands(), 4);
  const double none[] = {0.0, 0.0};
  const auto r = compute_resources(val.root_value, val.first_level, none, 1.0);

  Eigen::MatrixXd a(4, 3);
  Eigen::VectorXd v(4);
  for (int k = 0; k < 4; ++k) {
    a(k, 0) = val.first_level[k].pg[0];
    a(k, 1) = val.first_level[k].pg[1];
    a(k, 2) = 1.0;
    v(k) = val.first_level[k].value;
  }
  const Eigen::VectorXd x = (a.transpose() * a).ldlt().solve(a.transpose() * v);
  CHECK(r.a[0] == doctest::Approx(x(0)).epsilon(1e-6));
  CHECK(r.a[1] == doctest::Approx(x(1)).epsilon(1e-6));
  CHECK(r.b == doctest::Approx(x(2)).epsilon(1e-6));
  Eigen::VectorXd mine(3);
  mine << r.a[0], r.a[1], r.b;
  CHECK((a * mine - v).norm() == doctest::Approx(r.residual).epsilon(1e-9));
}

TEST_CASE("final-step branch keeps the previous weights") {
  std::vector<TreeNode> only{{{18.0, 26.0}, 1.5, 1.0, 1.0, 0}};
  const double prev[] = {-0.4, -0.3};
  const auto r = compute_resources(1.5, only, prev, 2.0);
  CHECK(r.a[0] == -0.4);
  CHECK(r.b == doctest::Approx((1.5 + 0.4 * 18.0 + 0.3 * 26.0) / 2.0));
  CHECK_THROWS_AS(compute_resources(1.5, only, std::span<const double>{}, 1.0), Error);
}

TEST_CASE("tes_allocate engines agree") {
  const auto g = two_grid();
  const auto m = calibrate_step_model(g, 1.0);
  const double now[] = {20.0, 25.0};
  const auto fast = tes_allocate(g, m, now, 5, {});
  const auto ref = tes_allocate(g, m, now, 5, {}, LatticeEngine::ReferenceTree);
  CHECK(fast.value == doctest::Approx(ref.value).epsilon(1e-12));
  CHECK(fast.allocation.b == doctest::Approx(ref.allocation.b).epsilon(1e-10));
  CHECK(fast.allocation.b == doctest::Approx(23.109).epsilon(1e-4));
}

TEST_CASE("terminal allocation") {
  const double d[] = {20.0, 25.0};
  const double short_[] = {25.0, 18.0}, ok[] = {25.0, 21.0};
  const auto s = tes_terminal_allocation(short_, d, 1.0);
  CHECK(s.b == 45.0);
  CHECK(s.a[1] == -1.0);
  const auto o = tes_terminal_allocation(ok, d, 1.0);
  CHECK(o.b == 0.0);
}

TEST_CASE("Monte Carlo valuation cross-checks") {
  const auto g1 = one_grid(0.03);
  const double p1[] = {20.0};
  const auto near_end = tes_value_mc(g1, p1, 5.0 - 1e-13, 5.0, 1000, 1);
  CHECK(near_end.mean == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(near_end.std_error < 1e-5);
  const double p_short[] = {18.0};
  CHECK(tes_value_mc(g1, p_short, 5.0 - 1e-13, 5.0, 1000, 1).mean == doctest::Approx(2.0).epsilon(1e-6));

  const auto atm = tes_value_mc(g1, p1, 0.0, 5.0, 200000, 2);
  CHECK(std::abs(atm.mean - 0.535136894) < 3 * atm.std_error);

  const auto g2 = two_grid();
  const double p2[] = {20.0, 25.0};
  const auto mc = tes_value_mc(g2, p2, 0.0, 5.0, 1000000, 3);
  const auto coarse = value_recombining(p2, calibrate_step_model(g2, 1.0), g2.demands(), 5).root_value;
  const auto fine = value_recombining(p2, calibrate_step_model(g2, 5.0 / 200.0), g2.demands(), 200).root_value;
  CHECK(std::abs(fine - mc.mean) < 3 * mc.std_error + 0.002 * fine);
  CHECK(std::abs(coarse - mc.mean) < 3 * mc.std_error + std::abs(coarse - fine) * 1.5);

  CHECK_THROWS_AS(tes_value_mc(g1, p1, 5.0, 5.0, 100, 1), Error);
}

TEST_CASE("TES never needs more than CES on the same tree") {
  auto rng = make_stream(31, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const auto g = two_grid(0.01 + 0.09 * u(rng), 0.01 + 0.09 * u(rng), -0.9 + 1.8 * u(rng));
    const auto m = calibrate_step_model(g, 1.0);
    const double root[] = {15.0 + 10.0 * u(rng), 20.0 + 10.0 * u(rng)};
    auto tree = forward_propagate(root, m, 4);
    const double tes = backpropagate(tree, g.demands()).root_value;
    double ces = 0.0;
    for (const auto& leaf : tree.leaves()) {
      ces += leaf.path_prob * (std::max(20.0 - leaf.pg[0], 0.0) + std::max(25.0 - leaf.pg[1], 0.0));
    }
    CHECK(tes <= ces + 1e-12);
  }
}
