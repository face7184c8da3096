#pragma once

#include <string>

#include "mq_fit.hpp"
#include "panel_data.hpp"

namespace twmq {

enum class PredictorKind { Hajek, Mq, Bmq, Tmq, Btmq };

std::string predictor_name(PredictorKind kind);

struct DomainEstimate {
  int d = 0;
  int t = 0;
  PredictorKind kind = PredictorKind::Hajek;
  double value = 0.0;
  double c_phi = 0.0;       // meaningful for Bmq/Btmq only
  double theta_used = 0.0;  // meaningful for model-based kinds
};

// Sample mean of the cell; the design-based anchor.
DomainEstimate hajek(const PanelFrame& frame, int d, int t);

// Plug-in predictor from the pooled fit interpolated at theta_d:
// (1/N_dt) { sum_s y + sum_r x' beta(theta_d) }.
DomainEstimate mq_predict(const PanelFrame& frame, const QuantileGrid& grid,
                          const std::vector<DomainTheta>& thetas, int d, int t);

// Bias-corrected version: adds (1/n)(1 - n/N) sum_s sigma * phi(e/sigma)
// with phi Huber at c_phi and residuals from the pooled fit.
DomainEstimate bmq_predict(const PanelFrame& frame, const QuantileGrid& grid,
                           const std::vector<DomainTheta>& thetas, int d, int t,
                           double c_phi);

// Time-weighted plug-in predictor from the (theta_d, t) surface.
DomainEstimate tmq_predict(const PanelFrame& frame, const QuantileSurface& surf,
                           const std::vector<DomainTheta>& thetas, int d, int t);

// Bias-corrected time-weighted predictor; standardized residuals come from
// the same surface and its converged scale.
DomainEstimate btmq_predict(const PanelFrame& frame, const QuantileSurface& surf,
                            const std::vector<DomainTheta>& thetas, int d, int t,
                            double c_phi);

}  // namespace twmq
