#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "rng.hpp"
#include "temporal_weights.hpp"
#include "test_support.hpp"

using namespace twmq;

namespace {

// grid with a single hand-chosen surface so the residual arithmetic is
// fully controlled
QuantileGrid manual_grid(const Eigen::VectorXd& beta) {
  QuantileGrid grid;
  grid.qs = {0.5};
  QuantileSurface s;
  s.q = 0.5;
  s.beta = beta;
  s.sigma = 1.0;
  s.converged = true;
  grid.surfaces.push_back(s);
  return grid;
}

std::vector<DomainTheta> flat_thetas(int D) {
  std::vector<DomainTheta> thetas;
  for (int d = 1; d <= D; ++d) thetas.push_back({d, 0.5});
  return thetas;
}

Eigen::MatrixXd seasonal_series(int D, int T, const std::vector<double>& phi,
                                double noise_sd, Rng& rng, double init_sd = 0.0) {
  Eigen::MatrixXd r(D, T);
  const int P = static_cast<int>(phi.size());
  for (int t = 1; t <= T; ++t) {
    for (int d = 1; d <= D; ++d) {
      double v = (t <= P && init_sd > 0.0 ? init_sd : noise_sd) * rng.normal();
      for (int k = 1; k <= P && t - k >= 1; ++k) {
        v += phi[static_cast<std::size_t>(k - 1)] * r(d - 1, t - k - 1);
      }
      r(d - 1, t - 1) = v;
    }
  }
  return r;
}

}  // namespace

TEST_CASE("subdomain residuals are cell means of fit residuals") {
  PanelFrame frame = test::make_frame(2, 2, 3, 5, 1);
  Eigen::VectorXd beta(2);
  beta << 10.0, 2.0;

  // perfect fit: zero residuals everywhere
  for (std::size_t r = 0; r < frame.sd.size(); ++r) {
    frame.y[static_cast<Eigen::Index>(r)] = frame.X.row(static_cast<int>(r)) * beta;
  }
  const Eigen::MatrixXd zero = subdomain_residuals(frame, manual_grid(beta), flat_thetas(2));
  CHECK(zero.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  // hand-set residuals {1, -1, 3} in cell (1,1) -> mean 1
  const auto& rows = frame.sample_rows(1, 1);
  REQUIRE(rows.size() == 3);
  const double offsets[3] = {1.0, -1.0, 3.0};
  for (int k = 0; k < 3; ++k) {
    frame.y[rows[static_cast<std::size_t>(k)]] =
        frame.X.row(rows[static_cast<std::size_t>(k)]) * beta + offsets[k];
  }
  const Eigen::MatrixXd table = subdomain_residuals(frame, manual_grid(beta), flat_thetas(2));
  CHECK(table(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("seasonal AR order selection") {
  // P_max = 0 has only the intercept model
  Rng rng(3);
  const Eigen::MatrixXd noise = seasonal_series(6, 8, {}, 1.0, rng);
  const SeasonalArFit f0 = fit_seasonal_ar(noise, 0);
  CHECK(f0.P == 0);
  CHECK(f0.phi.empty());

  // self-consistency: an order-one series at unit scale with negligible
  // innovation noise identifies the coefficient almost exactly
  Rng rng2(17);
  const Eigen::MatrixXd gen = seasonal_series(10, 12, {0.5}, 1e-6, rng2, 1.0);
  const SeasonalArFit f1 = fit_seasonal_ar(gen, 3);
  CHECK(f1.P == 1);
  CHECK(f1.phi[0] == doctest::Approx(0.5).epsilon(0.02));

  // white noise selects P = 0 in the majority of draws
  int zeros = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Rng r(1000 + rep);
    const Eigen::MatrixXd w = seasonal_series(8, 10, {}, 1.0, r);
    if (fit_seasonal_ar(w, 3).P == 0) ++zeros;
  }
  CHECK(zeros > 100);
}

TEST_CASE("seasonal AR recovers known coefficients") {
  Rng rng(23);
  const std::vector<double> phi{0.4, 0.3, 0.25};
  const Eigen::MatrixXd r = seasonal_series(40, 400, phi, 0.01, rng);
  const SeasonalArFit fit = fit_seasonal_ar(r, 5);
  REQUIRE(fit.P >= 3);  // AIC may keep a spurious small high-order term
  for (std::size_t k = 0; k < fit.phi.size(); ++k) {
    const double truth = k < phi.size() ? phi[k] : 0.0;
    CHECK(std::abs(fit.phi[k] - truth) < 0.02);
  }
}

TEST_CASE("non-stationary candidates fall back to P = 0") {
  Rng rng(5);
  Eigen::MatrixXd r(4, 12);
  for (int t = 1; t <= 12; ++t) {
    for (int d = 1; d <= 4; ++d) {
      r(d - 1, t - 1) = t >= 2 ? 1.08 * r(d - 1, t - 2) + 1e-4 * rng.normal()
                               : rng.normal();
    }
  }
  const SeasonalArFit fit = fit_seasonal_ar(r, 2);
  CHECK(fit.P == 0);
  CHECK(fit.fallback);
}

TEST_CASE("weight plan rows") {
  PanelFrame frame = test::make_frame(2, 10, 2, 4, 9);

  SeasonalArFit ar;
  ar.P = 3;
  ar.phi = {0.4, 0.3, 0.25};
  ar.D = 2;
  const TemporalWeightPlan plan = weight_plan(ar, frame);

  // paper-style coefficients at t = 5: S = 0.95
  CHECK(plan.w(4, 4) == doctest::Approx(0.4 / 0.95));
  CHECK(plan.w(4, 3) == doctest::Approx(0.3 / 0.95));
  CHECK(plan.w(4, 2) == doctest::Approx(0.25 / 0.95));
  CHECK(plan.w(4, 1) == 0.0);
  CHECK(plan.w(4, 5) == 0.0);

  // t = 1 concentrates on the first period
  CHECK(plan.w(0, 0) == doctest::Approx(1.0));

  // t = 2 <= P uses S_2 = |phi_1| + |phi_2|
  CHECK(plan.w(1, 1) == doctest::Approx(0.4 / 0.7));
  CHECK(plan.w(1, 0) == doctest::Approx(0.3 / 0.7));

  for (int t = 0; t < 10; ++t) {
    CHECK(plan.w.row(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plan.w.row(t).minCoeff() >= 0.0);
  }

  // scaling every coefficient by a positive constant changes nothing
  SeasonalArFit scaled = ar;
  for (auto& p : scaled.phi) p *= 7.5;
  const TemporalWeightPlan plan2 = weight_plan(scaled, frame);
  CHECK((plan2.w - plan.w).cwiseAbs().maxCoeff() < 1e-14);

  // negative coefficients contribute through their magnitude
  SeasonalArFit neg = ar;
  neg.phi[1] = -0.3;
  const TemporalWeightPlan plan3 = weight_plan(neg, frame);
  CHECK((plan3.w - plan.w).cwiseAbs().maxCoeff() < 1e-14);

  // P = 0 degenerates to identity rows
  SeasonalArFit none;
  none.P = 0;
  const TemporalWeightPlan plan0 = weight_plan(none, frame);
  for (int t = 0; t < 10; ++t) CHECK(plan0.w(t, t) == 1.0);
}
