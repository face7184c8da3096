#pragma once

#include <span>

namespace twmq {

// Tuning of the quantile-tilted Huber machinery. c_psi is the projective
// clipping constant, q the quantile order, epsilon_zero the residual
// magnitude below which the IRLS weight switches to its limiting value.
struct RobustConfig {
  double c_psi = 1.345;
  double q = 0.5;
  double epsilon_zero = 1e-8;

  void validate() const;
};

struct ScaleEstimate {
  double sigma = 0.0;
};

// Huber influence function: u inside (-c, c), c*sgn(u) outside.
double huber_psi(double u, double c_psi);

// Quantile-tilted influence 2*{q, 1-q}*psi(u/sigma).
double psi_q(double u, double sigma, const RobustConfig& cfg);

// Derivative of psi_q in u: 2*{q, 1-q}/sigma inside the clip region, 0
// outside and exactly 0 at the kinks |u/sigma| == c_psi.
double psi_q_dot(double u, double sigma, const RobustConfig& cfg);

// IRLS weight psi_q(e, sigma)/e, with the symmetric limit 1/sigma below
// epsilon_zero (average of the two one-sided limits 2q/sigma, 2(1-q)/sigma).
double irls_weight(double e, double sigma, const RobustConfig& cfg);

// MAD about the sample median, scaled by 1/0.6745. Throws a numeric error
// on fewer than 2 residuals or zero spread: a zero scale would poison every
// downstream formula, so it is never silently floored.
ScaleEstimate robust_scale(std::span<const double> residuals);

}  // namespace twmq
