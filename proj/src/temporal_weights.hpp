#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mq_fit.hpp"
#include "panel_data.hpp"

namespace twmq {

// Seasonal autoregression on the stacked subdomain residual series: the
// domain index runs fastest, so lag D steps back is the same domain one
// period earlier. Coefficients sit at the seasonal lags D, 2D, ..., PD.
struct SeasonalArFit {
  int P = 0;
  std::vector<double> phi;  // phi_1 .. phi_P
  double phi0 = 0.0;
  double sigma_a = 0.0;
  int D = 1;  // seasonal period of the stacked series
  double aic = 0.0;
  bool fallback = false;  // every P >= 1 candidate was non-stationary
};

struct TemporalWeightPlan {
  Eigen::MatrixXd w;  // T x T, row t-1 holds w_t
  RelevantSets sets;
  SeasonalArFit ar;
};

// Cell means of the residuals from the pooled fit interpolated at the
// domain's representative quantile: r_dt = mean over s_dt of
// (y - x'beta(theta_d)).
Eigen::MatrixXd subdomain_residuals(const PanelFrame& frame, const QuantileGrid& grid,
                                    const std::vector<DomainTheta>& thetas);

// Conditional least squares at the seasonal lags for each order
// P in {0..P_max}, all candidates conditioned on the same leading periods
// so the criteria are comparable. The order is ranked on the period-mean
// series (the calibrated carrier of the shared temporal signal) with a
// small-sample-corrected AIC; coefficients come from the stacked series.
// Non-stationary candidates are rejected; falls back to P=0 when nothing
// else survives.
SeasonalArFit fit_seasonal_ar(const Eigen::MatrixXd& residual_table, int P_max);

// Inter-period weight rows from the fitted AR coefficients: period i gets
// |phi_{t+1-i}| / S_t over the most recent min(t, P) periods; without a
// usable AR structure the current period takes all the weight. Every row
// sums to one.
TemporalWeightPlan weight_plan(const SeasonalArFit& ar, const PanelFrame& frame);

}  // namespace twmq
