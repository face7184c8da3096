#include "robust_kernel.hpp"

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "stats_util.hpp"

namespace twmq {

namespace {

void check_finite(double v, const char* name) {
  if (!std::isfinite(v)) {
    throw invalid_argument(std::string("non-finite ") + name);
  }
}

double tilt(double u, double q) { return u > 0.0 ? 2.0 * q : 2.0 * (1.0 - q); }

}  // namespace

void RobustConfig::validate() const {
  if (!(c_psi > 0.0) || !std::isfinite(c_psi)) {
    throw invalid_argument("c_psi must be a positive real");
  }
  if (!(q > 0.0 && q < 1.0)) {
    throw invalid_argument("q must lie in (0,1)");
  }
  if (!(epsilon_zero > 0.0 && epsilon_zero <= 1e-6)) {
    throw invalid_argument("epsilon_zero must lie in (0, 1e-6]");
  }
}

double huber_psi(double u, double c_psi) {
  check_finite(u, "u");
  if (!(c_psi > 0.0) || !std::isfinite(c_psi)) {
    throw invalid_argument("c_psi must be a positive real");
  }
  if (u > c_psi) return c_psi;
  if (u < -c_psi) return -c_psi;
  return u;
}

double psi_q(double u, double sigma, const RobustConfig& cfg) {
  check_finite(u, "u");
  check_finite(sigma, "sigma");
  if (!(sigma > 0.0)) throw invalid_argument("sigma must be positive");
  cfg.validate();
  return tilt(u, cfg.q) * huber_psi(u / sigma, cfg.c_psi);
}

double psi_q_dot(double u, double sigma, const RobustConfig& cfg) {
  check_finite(u, "u");
  check_finite(sigma, "sigma");
  if (!(sigma > 0.0)) throw invalid_argument("sigma must be positive");
  cfg.validate();
  if (std::abs(u / sigma) >= cfg.c_psi) return 0.0;
  return tilt(u, cfg.q) / sigma;
}

double irls_weight(double e, double sigma, const RobustConfig& cfg) {
  check_finite(e, "e");
  check_finite(sigma, "sigma");
  if (!(sigma > 0.0)) throw invalid_argument("sigma must be positive");
  cfg.validate();
  if (std::abs(e) < cfg.epsilon_zero) return 1.0 / sigma;
  return psi_q(e, sigma, cfg) / e;
}

ScaleEstimate robust_scale(std::span<const double> residuals) {
  if (residuals.size() < 2) {
    throw numeric_error("robust scale needs at least 2 residuals");
  }
  std::vector<double> tmp(residuals.begin(), residuals.end());
  const double med = median_inplace(tmp);
  for (double& v : tmp) v = std::abs(v - med);
  const double mad = median_inplace(tmp);
  if (!(mad > 0.0)) {
    throw numeric_error("degenerate scale: MAD of residuals is zero");
  }
  return ScaleEstimate{mad / 0.6745};
}

}  // namespace twmq
