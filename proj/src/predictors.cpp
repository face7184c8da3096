#include "predictors.hpp"

#include <cmath>
#include <limits>

#include "errors.hpp"
#include "robust_kernel.hpp"

namespace twmq {

std::string predictor_name(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::Hajek: return "hajek";
    case PredictorKind::Mq: return "mq";
    case PredictorKind::Bmq: return "bmq";
    case PredictorKind::Tmq: return "tmq";
    case PredictorKind::Btmq: return "btmq";
  }
  return "?";
}

namespace {

void require_cell(const PanelFrame& frame, int d, int t) {
  if (d < 1 || d > frame.D || t < 1 || t > frame.T) {
    throw invalid_argument("cell index out of range");
  }
  if (frame.n_dt(d - 1, t - 1) < 1) {
    throw numeric_error("empty cell (d=" + std::to_string(d) + ",t=" + std::to_string(t) + ")");
  }
}

double plug_in_value(const PanelFrame& frame, const Eigen::VectorXd& beta, int d, int t) {
  double sum_y = 0.0;
  for (int row : frame.sample_rows(d, t)) sum_y += frame.y[row];
  const double synth = frame.rsum[frame.cell(d, t)].dot(beta);
  return (sum_y + synth) / static_cast<double>(frame.N_dt(d - 1, t - 1));
}

// (1/n)(1 - n/N) * sum_s sigma * phi(e/sigma), phi Huber at c_phi
double bias_correction(const PanelFrame& frame, const Eigen::VectorXd& beta,
                       double sigma, int d, int t, double c_phi) {
  if (c_phi < 0.0 || !std::isfinite(c_phi)) {
    throw invalid_argument("c_phi must be a nonnegative real");
  }
  const int n = frame.n_dt(d - 1, t - 1);
  const int N = frame.N_dt(d - 1, t - 1);
  const double f = static_cast<double>(n) / static_cast<double>(N);
  if (c_phi == 0.0 || n == N) return 0.0;
  double s = 0.0;
  for (int row : frame.sample_rows(d, t)) {
    const double e = frame.y[row] - frame.X.row(row) * beta;
    s += sigma * huber_psi(e / sigma, c_phi);
  }
  return (1.0 - f) * s / static_cast<double>(n);
}

}  // namespace

DomainEstimate hajek(const PanelFrame& frame, int d, int t) {
  require_cell(frame, d, t);
  double s = 0.0;
  const auto& rows = frame.sample_rows(d, t);
  for (int row : rows) s += frame.y[row];
  return {d, t, PredictorKind::Hajek, s / static_cast<double>(rows.size()),
          std::numeric_limits<double>::quiet_NaN(),
          std::numeric_limits<double>::quiet_NaN()};
}

DomainEstimate mq_predict(const PanelFrame& frame, const QuantileGrid& grid,
                          const std::vector<DomainTheta>& thetas, int d, int t) {
  require_cell(frame, d, t);
  const double theta = thetas[static_cast<std::size_t>(d - 1)].theta_hat;
  Eigen::VectorXd beta;
  double sigma = 0.0;
  grid.interpolate(theta, beta, sigma);
  return {d, t, PredictorKind::Mq, plug_in_value(frame, beta, d, t),
          std::numeric_limits<double>::quiet_NaN(), theta};
}

DomainEstimate bmq_predict(const PanelFrame& frame, const QuantileGrid& grid,
                           const std::vector<DomainTheta>& thetas, int d, int t,
                           double c_phi) {
  require_cell(frame, d, t);
  const double theta = thetas[static_cast<std::size_t>(d - 1)].theta_hat;
  Eigen::VectorXd beta;
  double sigma = 0.0;
  grid.interpolate(theta, beta, sigma);
  const double value =
      plug_in_value(frame, beta, d, t) + bias_correction(frame, beta, sigma, d, t, c_phi);
  return {d, t, PredictorKind::Bmq, value, c_phi, theta};
}

DomainEstimate tmq_predict(const PanelFrame& frame, const QuantileSurface& surf,
                           const std::vector<DomainTheta>& thetas, int d, int t) {
  require_cell(frame, d, t);
  return {d, t, PredictorKind::Tmq, plug_in_value(frame, surf.beta, d, t),
          std::numeric_limits<double>::quiet_NaN(),
          thetas[static_cast<std::size_t>(d - 1)].theta_hat};
}

DomainEstimate btmq_predict(const PanelFrame& frame, const QuantileSurface& surf,
                            const std::vector<DomainTheta>& thetas, int d, int t,
                            double c_phi) {
  require_cell(frame, d, t);
  const double value = plug_in_value(frame, surf.beta, d, t) +
                       bias_correction(frame, surf.beta, surf.sigma, d, t, c_phi);
  return {d, t, PredictorKind::Btmq, value, c_phi,
          thetas[static_cast<std::size_t>(d - 1)].theta_hat};
}

}  // namespace twmq
