#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "pipeline.hpp"
#include "predictors.hpp"
#include "test_support.hpp"

using namespace twmq;

namespace {

QuantileGrid manual_grid(const Eigen::VectorXd& beta, double sigma) {
  QuantileGrid grid;
  grid.qs = {0.5};
  QuantileSurface s;
  s.q = 0.5;
  s.beta = beta;
  s.sigma = sigma;
  s.converged = true;
  grid.surfaces.push_back(s);
  return grid;
}

QuantileSurface manual_surface(const Eigen::VectorXd& beta, double sigma, int t) {
  QuantileSurface s;
  s.q = 0.5;
  s.t = t;
  s.beta = beta;
  s.sigma = sigma;
  s.converged = true;
  return s;
}

std::vector<DomainTheta> flat_thetas(int D) {
  std::vector<DomainTheta> thetas;
  for (int d = 1; d <= D; ++d) thetas.push_back({d, 0.5});
  return thetas;
}

// frame with one cell: n sampled units (x2 values xs, responses ys) and
// the given non-sampled x2 values
PanelFrame one_cell_frame(const std::vector<double>& xs, const std::vector<double>& ys,
                          const std::vector<double>& xr) {
  PanelFrame frame;
  frame.mode = FrameMode::UnitPopulation;
  frame.D = 1;
  frame.T = 1;
  frame.p = 2;
  const int n = static_cast<int>(xs.size());
  const int r = static_cast<int>(xr.size());
  frame.y.resize(n);
  frame.X.resize(n, 2);
  frame.Xr.resize(r, 2);
  for (int i = 0; i < n; ++i) {
    frame.sd.push_back(1);
    frame.st.push_back(1);
    frame.sj.push_back(i + 1);
    frame.y[i] = ys[static_cast<std::size_t>(i)];
    frame.X(i, 0) = 1.0;
    frame.X(i, 1) = xs[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < r; ++i) {
    frame.rd.push_back(1);
    frame.rt.push_back(1);
    frame.rj.push_back(n + i + 1);
    frame.Xr(i, 0) = 1.0;
    frame.Xr(i, 1) = xr[static_cast<std::size_t>(i)];
  }
  frame.finalize();
  return frame;
}

}  // namespace

TEST_CASE("hajek is the cell sample mean") {
  const PanelFrame frame = one_cell_frame({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, {});
  CHECK(hajek(frame, 1, 1).value == doctest::Approx(2.0));
  const PanelFrame single = one_cell_frame({4.0}, {7.5}, {});
  CHECK(hajek(single, 1, 1).value == doctest::Approx(7.5));
  CHECK_THROWS_AS(hajek(frame, 1, 2), Error);
}

TEST_CASE("plug-in predictor arithmetic") {
  // N = 2, n = 1, sampled y = 10, non-sampled fitted value 6 -> mean 8
  Eigen::VectorXd beta(2);
  beta << 0.0, 2.0;
  const PanelFrame frame = one_cell_frame({5.0}, {10.0}, {3.0});  // x'beta = 6
  const QuantileGrid grid = manual_grid(beta, 1.0);
  CHECK(mq_predict(frame, grid, flat_thetas(1), 1, 1).value == doctest::Approx(8.0));
}

TEST_CASE("census cells collapse every predictor to hajek") {
  Eigen::VectorXd beta(2);
  beta << 4.0, -1.0;
  const PanelFrame frame = one_cell_frame({1.0, 2.0, 4.0}, {9.0, 11.0, 10.0}, {});
  const QuantileGrid grid = manual_grid(beta, 2.0);
  const QuantileSurface surf = manual_surface(beta, 2.0, 1);
  const auto thetas = flat_thetas(1);
  const double anchor = hajek(frame, 1, 1).value;
  CHECK(mq_predict(frame, grid, thetas, 1, 1).value == anchor);
  CHECK(bmq_predict(frame, grid, thetas, 1, 1, 3.0).value == anchor);
  CHECK(tmq_predict(frame, surf, thetas, 1, 1).value == anchor);
  CHECK(btmq_predict(frame, surf, thetas, 1, 1, 3.0).value == anchor);
}

TEST_CASE("linear population is predicted exactly") {
  Eigen::VectorXd beta(2);
  beta << 3.0, 1.5;
  const std::vector<double> xs{1.0, 2.0};
  const std::vector<double> xr{3.0, 0.5, 1.2};
  std::vector<double> ys;
  for (double x : xs) ys.push_back(3.0 + 1.5 * x);
  const PanelFrame frame = one_cell_frame(xs, ys, xr);
  double truth = 0.0;
  for (double x : xs) truth += 3.0 + 1.5 * x;
  for (double x : xr) truth += 3.0 + 1.5 * x;
  truth /= 5.0;
  const QuantileGrid grid = manual_grid(beta, 1.0);
  CHECK(mq_predict(frame, grid, flat_thetas(1), 1, 1).value == doctest::Approx(truth));
}

TEST_CASE("bias corrections") {
  Eigen::VectorXd beta(2);
  beta << 0.0, 1.0;
  const double sigma = 2.0;
  const std::vector<double> xs{1.0, 2.0, 3.0};
  const std::vector<double> ys{1.0 + 3.0, 2.0 - 1.0, 3.0 + 0.5};  // residuals 3, -1, 0.5
  const PanelFrame frame = one_cell_frame(xs, ys, {1.5, 2.5});
  const QuantileGrid grid = manual_grid(beta, sigma);
  const QuantileSurface surf = manual_surface(beta, sigma, 1);
  const auto thetas = flat_thetas(1);

  const double mq = mq_predict(frame, grid, thetas, 1, 1).value;
  const double tmq = tmq_predict(frame, surf, thetas, 1, 1).value;
  CHECK(mq == tmq);  // identical coefficients

  // c_phi = 0 is bit for bit the uncorrected value
  CHECK(bmq_predict(frame, grid, thetas, 1, 1, 0.0).value == mq);
  CHECK(btmq_predict(frame, surf, thetas, 1, 1, 0.0).value == tmq);

  // enormous clip constant: the raw residual-mean correction
  const double f = 3.0 / 5.0;
  const double raw = (1.0 - f) * (3.0 - 1.0 + 0.5) / 3.0;
  CHECK(bmq_predict(frame, grid, thetas, 1, 1, 1e9).value == doctest::Approx(mq + raw));

  // single-unit cell: residual sigma, c >= 1, n=1, N=2 -> tmq + sigma/2
  const PanelFrame tiny = one_cell_frame({2.0}, {2.0 + sigma}, {1.0});
  const double tiny_tmq = tmq_predict(tiny, surf, thetas, 1, 1).value;
  const double corrected = btmq_predict(tiny, surf, thetas, 1, 1, 1.5).value;
  CHECK(corrected == doctest::Approx(tiny_tmq + 0.5 * sigma));
}

TEST_CASE("correction magnitude grows with the clip constant") {
  Eigen::VectorXd beta(2);
  beta << 0.0, 1.0;
  const QuantileSurface surf = manual_surface(beta, 1.0, 1);
  const auto thetas = flat_thetas(1);

  // same-sign residuals: the aggregate correction is monotone in c
  const PanelFrame frame =
      one_cell_frame({1.0, 2.0, 3.0}, {1.0 + 2.0, 2.0 + 0.5, 3.0 + 4.0}, {2.0, 2.5});
  const double tmq = tmq_predict(frame, surf, thetas, 1, 1).value;
  double prev = 0.0;
  for (double c = 0.0; c <= 6.0; c += 0.25) {
    const double gap =
        std::abs(btmq_predict(frame, surf, thetas, 1, 1, c).value - tmq);
    CHECK(gap >= prev - 1e-12);
    prev = gap;
  }

  // per-residual contributions are monotone regardless of sign
  for (double u : {-3.0, -0.4, 0.7, 2.5}) {
    double prev_term = 0.0;
    for (double c = 0.0; c <= 5.0; c += 0.1) {
      const double term = c > 0.0 ? std::abs(huber_psi(u, c)) : 0.0;
      CHECK(term >= prev_term - 1e-12);
      prev_term = term;
    }
  }
}

TEST_CASE("location equivariance through the full pipeline") {
  const PanelFrame frame = test::make_frame(3, 3, 6, 9, 404, 1.0, 2.0);
  PanelFrame shifted = frame;
  const double kappa = 17.5;
  for (Eigen::Index i = 0; i < shifted.y.size(); ++i) shifted.y[i] += kappa;

  FitOptions opts;
  const MqModel a = fit_model(frame, opts);
  const MqModel b = fit_model(shifted, opts);
  for (int d = 1; d <= 3; ++d) {
    for (int t = 1; t <= 3; ++t) {
      CHECK(hajek(shifted, d, t).value ==
            doctest::Approx(hajek(frame, d, t).value + kappa).epsilon(1e-10));
      CHECK(mq_predict(shifted, b.grid, b.thetas, d, t).value ==
            doctest::Approx(mq_predict(frame, a.grid, a.thetas, d, t).value + kappa)
                .epsilon(1e-8));
      CHECK(tmq_predict(shifted, b.surface_theta(d, t), b.thetas, d, t).value ==
            doctest::Approx(tmq_predict(frame, a.surface_theta(d, t), a.thetas, d, t).value +
                            kappa)
                .epsilon(1e-8));
    }
  }
}
