#pragma once

#include <vector>

#include "mq_fit.hpp"
#include "panel_data.hpp"
#include "temporal_weights.hpp"

namespace twmq {

struct FitOptions {
  double c_psi = 1.345;
  double epsilon_zero = 1e-8;
  std::vector<double> grid_qs;  // empty: default grid
  int P_max = -1;               // negative: min(5, T-1)
  ConvergenceControl ctrl;
  int threads = 1;

  RobustConfig robust(double q = 0.5) const {
    return RobustConfig{c_psi, q, epsilon_zero};
  }
};

// Everything the predictors, MSE estimators and diagnostics consume: the
// pooled quantile grid, the unit coefficients and their domain means, the
// seasonal AR of the cell residuals, the weight plan and the time-weighted
// surfaces. Time-weighted fits are computed only at the quantiles that are
// actually used downstream: every theta_d plus the median, per period.
struct MqModel {
  int D = 0;
  int T = 0;
  FitOptions opts;
  QuantileGrid grid;
  std::vector<double> qhat;  // per sampled frame row
  std::vector<DomainTheta> thetas;
  Eigen::MatrixXd resid_table;  // D x T subdomain residuals
  TemporalWeightPlan plan;
  // [t-1][slot]: slot d-1 holds the (theta_d, t) surface, slot D the median
  std::vector<std::vector<QuantileSurface>> twmq;

  const QuantileSurface& surface_theta(int d, int t) const {
    return twmq[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(d - 1)];
  }
  const QuantileSurface& surface_median(int t) const {
    return twmq[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(D)];
  }
};

MqModel fit_model(const PanelFrame& frame, const FitOptions& opts);

}  // namespace twmq
