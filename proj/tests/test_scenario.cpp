#include <doctest.h>

#include <sstream>

#include "gridhedge/error.hpp"
#include "gridhedge/scenario.hpp"

using namespace gridhedge;

TEST_CASE("terminal case labels") {
  const std::vector<double> d{20, 25};
  CHECK(to_string(classify_terminal(std::vector<double>{22, 26}, d)) == "ge_ge");
  CHECK(to_string(classify_terminal(std::vector<double>{22, 24}, d)) == "ge_lt");
  CHECK(to_string(classify_terminal(std::vector<double>{20, 25}, d)) == "ge_ge");
  CHECK(parse_case_label(">=,<") == parse_case_label("ge_lt"));
  CHECK_THROWS_AS(parse_case_label("ge_eq"), Error);
}

TEST_CASE("battery savings series") {
  const std::vector<double> same{10, 8, 0};
  const auto s = battery_savings(same, same);
  CHECK(s.overall == 0.0);
  const std::vector<double> tes{5, 8, 3}, ces{10, 10, 0};
  const auto t = battery_savings(tes, ces);
  CHECK(t.pct[0] == doctest::Approx(50.0));
  CHECK(t.pct[1] == doctest::Approx(20.0));
  CHECK(t.pct[2] == 0.0);
  CHECK(t.overall == doctest::Approx(70.0 / 3.0));
  CHECK_THROWS_AS(battery_savings(tes, std::vector<double>{1.0}), Error);
}

TEST_CASE("t = 0 battery units of the case-study parameters") {
  const auto c = case_study_config();
  const auto model = calibrate_step_model(c.grid, 1.0);
  const std::vector<double> flat{20, 25, 20, 25, 20, 25, 20, 25, 20, 25, 20, 25};
  const auto p = evaluate_path(c, model, flat);
  CHECK(p.b_ces[0] == doctest::Approx(23.2135).epsilon(1e-5));
  CHECK(p.b_tes[0] == doctest::Approx(23.109).epsilon(1e-4));
  CHECK(p.b_tes[0] <= p.b_ces[0]);
  // Flat at the demand point: no shortfall at the horizon.
  CHECK(p.b_tes.back() == 0.0);
  CHECK(p.b_ces.back() == 0.0);
}

TEST_CASE("terminal battery by case") {
  auto c = case_study_config();
  c.n_paths = 60;
  c.bootstrap_resamples = 100;

  c.case_filter = parse_case_label("ge_ge");
  const auto one = run_case_study(c);
  CHECK(one.b_tes.mean.back() == 0.0);
  CHECK(one.b_ces.mean.back() == 0.0);
  CHECK(one.n_accepted == 60);

  c.case_filter = parse_case_label("ge_lt");
  const auto two = run_case_study(c);
  CHECK(two.b_ces.mean.back() == doctest::Approx(25.0));

  c.case_filter = parse_case_label("lt_lt");
  const auto three = run_case_study(c);
  CHECK(three.b_tes.mean.back() == doctest::Approx(45.0));
  CHECK(three.b_ces.mean.back() == doctest::Approx(45.0));
}

TEST_CASE("carry terminal rule keeps the last weights") {
  auto c = case_study_config();
  c.tes_terminal = TesTerminalRule::Carry;
  const auto model = calibrate_step_model(c.grid, 1.0);
  const std::vector<double> path{20, 25, 21, 24, 22, 24, 21, 23, 22, 24, 23, 24};
  const auto p = evaluate_path(c, model, path);
  CHECK(p.b_tes.size() == 6);
  CHECK(p.v_tes.back() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("case study output is deterministic") {
  auto c = case_study_config();
  c.n_paths = 30;
  c.bootstrap_resamples = 100;
  c.seed = 17;
  std::ostringstream a, b;
  write_results_csv(a, run_case_study(c));
  write_results_csv(b, run_case_study(c));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("t_hours,metric,case,mean,ci_lo,ci_hi\n", 0) == 0);

  c.seed = 18;
  std::ostringstream other;
  write_results_csv(other, run_case_study(c));
  CHECK(other.str() != a.str());
}

TEST_CASE("config validation") {
  auto c = case_study_config();
  c.initial_kw = {20.0};
  CHECK_THROWS_AS(c.validate(), Error);
  c = case_study_config();
  c.bootstrap_resamples = 10;
  CHECK_THROWS_AS(c.validate(), Error);
}
