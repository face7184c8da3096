#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "panel_data.hpp"
#include "robust_kernel.hpp"

namespace twmq {

struct ConvergenceControl {
  double tol = 1e-6;   // max-norm change of beta between iterations
  int max_iter = 100;
};

// One fitted regression: pooled (t == 0) or time-weighted at period t.
// `rows` lists the sampled-frame rows the fit ran on, in the canonical
// domain-major, period, unit order; `weights` holds the combined
// w_ti * w_psi values that produced `beta`, so beta is the exact weighted
// least squares solution for them. The pseudo-linear machinery depends on
// that exactness.
struct QuantileSurface {
  double q = 0.5;
  int t = 0;
  Eigen::VectorXd beta;
  double sigma = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<int> rows;
  Eigen::VectorXd weights;
  // objective-descent bookkeeping for fit diagnostics
  int objective_steps = 0;
  int monotone_steps = 0;

  double fitted(const Eigen::MatrixXd& X, int row) const {
    return X.row(row) * beta;
  }
};

struct QuantileGrid {
  std::vector<double> qs;
  std::vector<QuantileSurface> surfaces;

  // linear interpolation of beta and sigma at quantile q, clamped to the
  // grid range
  void interpolate(double q, Eigen::VectorXd& beta, double& sigma) const;
};

struct DomainTheta {
  int d = 0;
  double theta_hat = 0.5;
};

// Sampled rows pooled over the relevant periods of t, domain-major.
std::vector<int> stacked_rows(const PanelFrame& frame, const RelevantSets& sets, int t);

// Pooled three-level fit at quantile q over every sampled unit.
QuantileSurface fit_mq3(const PanelFrame& frame, double q, const RobustConfig& cfg,
                        const ConvergenceControl& ctrl,
                        const Eigen::VectorXd* warm_start = nullptr);

// Time-weighted fit at (q, t): weighted least squares initialisation with
// the inter-period weights alone, then IRLS with combined weights
// w_ti * w_psi and the scale re-estimated from the pooled residuals each
// iteration.
QuantileSurface fit_twmq(const PanelFrame& frame, double q, int t,
                         const Eigen::MatrixXd& w /* T x T rows w_t */,
                         const RelevantSets& sets, const RobustConfig& cfg,
                         const ConvergenceControl& ctrl);

// Independent pooled fits over a strictly increasing grid of quantiles,
// swept in order with warm starts.
QuantileGrid fit_grid(const PanelFrame& frame, const std::vector<double>& qs,
                      const RobustConfig& cfg, const ConvergenceControl& ctrl);

// Quantile order at which the fitted surface passes through (x, y):
// piecewise-linear inversion of q -> x'beta(q), first crossing scanning
// upward, clamped to the grid range.
double unit_mq_coefficient(const Eigen::RowVectorXd& x, double y, const QuantileGrid& grid);

// Low-level crossing scan over precomputed fitted values.
double find_crossing_q(double y, const Eigen::VectorXd& fitted, const std::vector<double>& qs);

// q-hat for every sampled unit of the frame.
std::vector<double> unit_mq_coefficients(const PanelFrame& frame, const QuantileGrid& grid);

// Domain means of the sampled unit-level coefficients.
std::vector<DomainTheta> domain_thetas(const PanelFrame& frame,
                                       const std::vector<double>& qhat);

// Default quantile grid {0.02, 0.04, ..., 0.98} (0.5 included).
std::vector<double> default_quantile_grid();

}  // namespace twmq
