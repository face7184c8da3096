#pragma once

#include <string>
#include <vector>

#include "pipeline.hpp"

namespace twmq {

// Pseudo-linear representation of the time-weighted predictor for one
// target cell: a' y_s(t) / N_dt reproduces it exactly. eps flags the cell's
// own sampled units, z carries the synthetic part, and lambda combines both
// for the unit-variance estimators.
struct PseudoLinearWeights {
  int d = 0;
  int t = 0;
  std::vector<int> rows;  // stacked s(t) frame rows, aligned with the vectors
  Eigen::VectorXd z;
  Eigen::VectorXd eps;
  Eigen::VectorXd a;
  Eigen::VectorXd lambda;
};

PseudoLinearWeights pseudo_weights(const PanelFrame& frame, const QuantileSurface& surf,
                                   const TemporalWeightPlan& plan, int d, int t);

struct SandwichVariance {
  Eigen::MatrixXd V_beta;  // p x p
};

// Sandwich estimator of var(beta) for one time-weighted surface, summed
// over the pooled sample of its relevant periods.
SandwichVariance sandwich_v_beta(const PanelFrame& frame, const QuantileSurface& surf,
                                 const TemporalWeightPlan& plan, double c_psi,
                                 double epsilon_zero);

// (1/N_dt^2) sum lambda * e^2 with the supplied unit-level residuals.
double var_pseudo(const PanelFrame& frame, const PseudoLinearWeights& pw,
                  const Eigen::VectorXd& resid);

// Residuals of the stacked rows under one coefficient vector.
Eigen::VectorXd residuals_under(const PanelFrame& frame, const std::vector<int>& rows,
                                const Eigen::VectorXd& beta);

// Unit-variance estimators of var(ybar over the non-sampled part of the
// cell). Variant 1 uses the cell's own residual sum over n_d(t)-1 degrees;
// variant 2 pools all domains at period t over n_.t - D degrees. Census
// cells return 0 by convention.
double var_ybar_r(const PanelFrame& frame, const RelevantSets& sets,
                  const std::vector<Eigen::VectorXd>& theta_betas, int d, int t,
                  int variant);

// Pseudo-linear bias estimate of the time-weighted predictor.
double bias_tmq(const PanelFrame& frame, const PseudoLinearWeights& pw,
                const Eigen::VectorXd& fitted_own, const Eigen::VectorXd& beta_target);

enum class MseEstimator { Tmq11, Tmq12, Tmq21, Tmq22, Btmq1, Btmq2, Btmq3 };

std::string estimator_name(MseEstimator est);
MseEstimator estimator_from_name(const std::string& name);

struct MseReport {
  int d = 0;
  int t = 0;
  MseEstimator estimator = MseEstimator::Tmq22;
  double mse = 0.0;
  double rmse = 0.0;
  double variance_part = 0.0;
  double bias_part = 0.0;  // signed; mse = variance_part + bias_part^2
  bool stability_warning = false;
};

// Per-cell assembly with the shared pieces (pseudo weights, sandwich
// variance, bias estimate) computed once per cell and reused across the
// seven estimators; periods are cached across cells.
class MseCalculator {
 public:
  MseCalculator(const PanelFrame& frame, const MqModel& model);

  MseReport compute(int d, int t, MseEstimator est, double c_phi);
  std::vector<MseReport> all(int d, int t, double c_phi);

  // inputs of the robustness-parameter objective for one cell
  struct CellInputs {
    std::vector<double> u_hat;  // standardized cell residuals
    double sigma = 0.0;
    int n_dt = 0;
    int N_dt = 0;
    double bias_hat = 0.0;  // pseudo-linear bias estimate
  };
  CellInputs selection_inputs(int d, int t);

 private:
  struct PeriodCache {
    bool ready = false;
    std::vector<int> rows;
    Eigen::VectorXd median_resid;
    Eigen::VectorXd own_resid;   // residual under the unit's own domain surface
    Eigen::VectorXd fitted_own;  // y - own_resid
  };
  struct CellCache {
    int d = 0, t = 0;
    bool ready = false;
    PseudoLinearWeights pw;
    Eigen::VectorXd resid_target;  // stacked residuals under the (theta_d, t) surface
    Eigen::MatrixXd V_beta;
    double bias = 0.0;
    double var1 = 0.0, var2 = 0.0;
    double v11 = 0.0, v12 = 0.0;
  };

  const PeriodCache& period(int t);
  const CellCache& cell(int d, int t);

  const PanelFrame& frame_;
  const MqModel& model_;
  std::vector<PeriodCache> periods_;
  CellCache cell_;
};

}  // namespace twmq
