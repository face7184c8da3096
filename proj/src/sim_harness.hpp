#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pipeline.hpp"
#include "predictors.hpp"
#include "rng.hpp"
#include "uncertainty.hpp"

namespace twmq {

enum class Scenario { Clean, UnitOutliers, BothOutliers };  // [0,0], [e,0], [e,u]
enum class TimeCase { Ar1, Ar3 };

Scenario scenario_from_name(const std::string& name);
std::string scenario_name(Scenario s);

enum class CPhiMode { Fixed, Optimal, PaperGrid };

struct SimDesign {
  int D = 40;
  int T = 10;
  int N_dt = 100;
  int n_dt = 5;
  Scenario scenario = Scenario::Clean;
  TimeCase time_case = TimeCase::Ar1;
  double sigma_u = 1.0;  // case 1
  double rho = 0.2;      // case 1
  std::vector<double> ar_phi = {0.4, 0.3, 0.25};  // case 2
  double ar_sigma = 1.0;                          // case 2
  int S = 100;
  std::uint64_t seed = 1;

  double c_psi = 1.345;
  int P_max = -1;
  int threads = 1;
  CPhiMode c_mode = CPhiMode::Optimal;
  double c_fixed = 3.0;

  void validate() const;
};

// One generated finite population with the responses of every unit and the
// true cell means kept for scoring.
struct Population {
  int D = 0, T = 0, N_dt = 0;
  std::vector<double> x;  // cell-major: ((d-1)*T + (t-1))*N_dt + j
  std::vector<double> y;
  Eigen::MatrixXd true_mean;  // D x T
};

Population generate_population(const SimDesign& design, Rng& rng);

// Simple random sample without replacement of n_dt units per cell,
// returned as a unit-level frame with an intercept column.
PanelFrame draw_sample(const Population& pop, int n_dt, Rng& rng);

// Frame treating the whole population as sampled (used to compute the true
// unit coefficients).
PanelFrame census_frame(const Population& pop);

struct PredictorMetrics {
  PredictorKind kind;
  double arbias = 0.0;  // percent
  double rrmse = 0.0;   // percent
};

struct MseEstimatorMetrics {
  MseEstimator est;
  double arbias2 = 0.0;  // percent, vs the empirical RMSE
  double rrmse2 = 0.0;   // percent
  double p_plus = 0.0;
};

struct SimMetrics {
  std::vector<PredictorMetrics> predictors;
  std::vector<MseEstimatorMetrics> estimators;
  Eigen::MatrixXd mean_c_hat;       // D x T Monte Carlo means of the selected c
  Eigen::MatrixXd rmse1_tmq;        // per-cell empirical RMSE of the tmq predictor
  Eigen::MatrixXd rmse1_btmq;       // per-cell empirical RMSE of the btmq predictor
  double empirical_rmse_tmq = 0.0;  // absolute, averaged over cells
  double empirical_rmse_btmq = 0.0;
  int S = 0;
  int failures = 0;
  long nonfinite_mse = 0;           // non-finite estimator values outside btmq3 failures
  double btmq3_failure_rate = 0.0;  // share of (cell, replicate) evaluations
  double btmq3_warning_rate = 0.0;
};

// Full Monte Carlo pass: regenerate the population each replicate, sample,
// fit, predict with per-cell robustness parameters, evaluate all seven MSE
// estimators, and reduce in replicate order with compensated sums.
// Replicates failing with a numeric error are dropped; more than 1% of S
// aborts the run.
SimMetrics run_simulation(const SimDesign& design);

struct ThetaConsistencyRow {
  int n_dt = 0;
  double arbias = 0.0;  // percent
  double rrmse = 0.0;   // percent
};

// Fixed-population resampling study of the domain-mean coefficients.
std::vector<ThetaConsistencyRow> theta_consistency_study(const SimDesign& design,
                                                         const std::vector<int>& n_grid,
                                                         int S);

// Parsed "key = value" study description: the main Monte Carlo pass or the
// fixed-population theta study.
struct SimStudy {
  SimDesign design;
  bool theta_study = false;
  std::vector<int> n_grid = {1, 2, 5, 10, 25, 50};
  std::string source_text;
};

SimStudy parse_sim_design(const std::string& text);

}  // namespace twmq
