#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "sim_harness.hpp"

using namespace twmq;

namespace {

SimDesign small_design() {
  SimDesign d;
  d.D = 6;
  d.T = 4;
  d.N_dt = 30;
  d.n_dt = 4;
  d.S = 3;
  d.seed = 12345;
  return d;
}

}  // namespace

TEST_CASE("design text parsing") {
  const SimStudy study = parse_sim_design(
      "# comment\n"
      "D = 8\n"
      "T = 5\n"
      "N_dt = 40\n"
      "n_dt = 5\n"
      "scenario = e,u\n"
      "case = 1.2\n"
      "S = 7\n"
      "seed = 99\n"
      "c_mode = fixed\n"
      "c_fixed = 3\n");
  CHECK(study.design.D == 8);
  CHECK(study.design.scenario == Scenario::BothOutliers);
  CHECK(study.design.time_case == TimeCase::Ar1);
  CHECK(study.design.rho == doctest::Approx(0.8));
  CHECK(study.design.c_mode == CPhiMode::Fixed);
  CHECK(!study.theta_study);

  const SimStudy theta = parse_sim_design("study = theta\nn_grid = 2, 5\nS = 4\n");
  CHECK(theta.theta_study);
  CHECK(theta.n_grid == std::vector<int>{2, 5});

  CHECK_THROWS_AS(parse_sim_design("bogus_key = 1\n"), Error);
  CHECK_THROWS_AS(parse_sim_design("D\n"), Error);
  CHECK_THROWS_AS(parse_sim_design("n_dt = 50\nN_dt = 10\n"), Error);
}

TEST_CASE("population generator moments") {
  SimDesign d = small_design();
  d.D = 10;
  d.N_dt = 200;
  Rng rng(d.seed, 0);
  const Population pop = generate_population(d, rng);

  // log-normal(1, 0.5) has mean exp(1.125)
  double mx = 0.0;
  for (double x : pop.x) mx += x;
  mx /= static_cast<double>(pop.x.size());
  CHECK(mx == doctest::Approx(std::exp(1.125)).epsilon(0.03));

  // true means recorded per cell
  const std::size_t base = 0;
  double s = 0.0;
  for (int j = 0; j < d.N_dt; ++j) s += pop.y[base + static_cast<std::size_t>(j)];
  CHECK(pop.true_mean(0, 0) == doctest::Approx(s / d.N_dt));
}

TEST_CASE("area-level outliers raise the top block") {
  SimDesign d = small_design();
  d.D = 40;
  d.T = 2;
  d.N_dt = 60;
  d.scenario = Scenario::BothOutliers;
  double lift = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    Rng rng(500 + rep, 0);
    const Population pop = generate_population(d, rng);
    double top = 0.0, rest = 0.0;
    for (int dd = 1; dd <= 40; ++dd) {
      const double m = pop.true_mean.row(dd - 1).mean();
      if (dd >= 37) {
        top += m / 4.0;
      } else {
        rest += m / 36.0;
      }
    }
    lift += (top - rest) / 6.0;
  }
  // the contaminated block sits about 9 units higher on average
  CHECK(lift == doctest::Approx(9.0).epsilon(0.25));
}

TEST_CASE("sampling splits the population without loss") {
  SimDesign d = small_design();
  Rng rng(3, 0);
  const Population pop = generate_population(d, rng);
  const PanelFrame frame = draw_sample(pop, d.n_dt, rng);
  CHECK(frame.mode == FrameMode::UnitPopulation);
  CHECK(frame.n() == static_cast<long long>(d.D) * d.T * d.n_dt);
  CHECK(frame.N() == static_cast<long long>(d.D) * d.T * d.N_dt);

  const PanelFrame census = census_frame(pop);
  CHECK(census.n() == census.N());
}

TEST_CASE("seeded runs are exactly reproducible") {
  const SimDesign d = small_design();
  const SimMetrics a = run_simulation(d);
  const SimMetrics b = run_simulation(d);
  REQUIRE(a.predictors.size() == b.predictors.size());
  for (std::size_t i = 0; i < a.predictors.size(); ++i) {
    CHECK(a.predictors[i].arbias == b.predictors[i].arbias);
    CHECK(a.predictors[i].rrmse == b.predictors[i].rrmse);
  }
  for (std::size_t i = 0; i < a.estimators.size(); ++i) {
    CHECK(a.estimators[i].rrmse2 == b.estimators[i].rrmse2);
    CHECK(a.estimators[i].p_plus == b.estimators[i].p_plus);
  }
  CHECK((a.mean_c_hat - b.mean_c_hat).cwiseAbs().maxCoeff() == 0.0);

  // a different seed moves the numbers
  SimDesign d2 = d;
  d2.seed = 777;
  const SimMetrics c = run_simulation(d2);
  CHECK(c.predictors[0].rrmse != a.predictors[0].rrmse);
}

TEST_CASE("parallel and serial runs agree") {
  SimDesign d = small_design();
  d.S = 4;
  const SimMetrics serial = run_simulation(d);
  d.threads = 4;
  const SimMetrics parallel = run_simulation(d);
  for (std::size_t i = 0; i < serial.predictors.size(); ++i) {
    CHECK(std::abs(serial.predictors[i].rrmse - parallel.predictors[i].rrmse) <= 1e-12);
    CHECK(std::abs(serial.predictors[i].arbias - parallel.predictors[i].arbias) <= 1e-12);
  }
  for (std::size_t i = 0; i < serial.estimators.size(); ++i) {
    CHECK(std::abs(serial.estimators[i].rrmse2 - parallel.estimators[i].rrmse2) <= 1e-12);
  }
}

TEST_CASE("metrics are sane on a small clean run") {
  SimDesign d = small_design();
  d.S = 5;
  const SimMetrics m = run_simulation(d);
  CHECK(m.failures == 0);
  REQUIRE(m.predictors.size() == 5);
  REQUIRE(m.estimators.size() == 7);
  for (const auto& pm : m.predictors) {
    CHECK(std::isfinite(pm.arbias));
    CHECK(pm.rrmse > 0.0);
  }
  for (const auto& em : m.estimators) {
    CHECK(em.p_plus >= 0.0);
    CHECK(em.p_plus <= 1.0);
    CHECK(em.rrmse2 >= 0.0);
  }
  CHECK(m.mean_c_hat.minCoeff() >= 0.0);
  CHECK(m.empirical_rmse_tmq > 0.0);
  CHECK(m.btmq3_failure_rate <= 0.01);

  // the model-based predictors beat the direct estimator even at toy scale
  CHECK(m.predictors[3].rrmse < m.predictors[0].rrmse);
}

TEST_CASE("theta consistency study shrinks with the sample") {
  SimDesign d = small_design();
  d.D = 8;
  d.T = 4;
  d.N_dt = 60;
  d.S = 6;
  const auto rows = theta_consistency_study(d, {4, 20}, 6);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n_dt == 4);
  CHECK(rows[1].n_dt == 20);
  CHECK(rows[0].rrmse > rows[1].rrmse);
  CHECK(rows[1].rrmse > 0.0);
}
