#include "mq_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"
#include "stats_util.hpp"

namespace twmq {

namespace {

double huber_rho(double v, double c) {
  const double a = std::abs(v);
  return a < c ? 0.5 * v * v : c * a - 0.5 * c * c;
}

double rho_q(double u, double sigma, const RobustConfig& cfg) {
  const double tilt = u > 0.0 ? cfg.q : 1.0 - cfg.q;
  return 2.0 * sigma * tilt * huber_rho(u / sigma, cfg.c_psi);
}

Eigen::VectorXd wls_solve(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys,
                          const Eigen::VectorXd& w) {
  const int p = static_cast<int>(Xs.cols());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < Xs.rows(); ++i) {
    const double wi = w[i];
    if (wi == 0.0) continue;
    A.selfadjointView<Eigen::Lower>().rankUpdate(Xs.row(i).transpose(), wi);
    b += wi * ys[i] * Xs.row(i).transpose();
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) {
    throw numeric_error("singular design: X'WX is not invertible");
  }
  return lu.solve(b);
}

QuantileSurface irls_fit(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys,
                         const Eigen::VectorXd& period_w, double q, int t,
                         const RobustConfig& cfg_in, const ConvergenceControl& ctrl,
                         const Eigen::VectorXd* warm_start) {
  RobustConfig cfg = cfg_in;
  cfg.q = q;
  cfg.validate();
  const int m = static_cast<int>(ys.size());
  const int p = static_cast<int>(Xs.cols());
  if (m <= p) {
    throw numeric_error("underdetermined fit: need more observations than coefficients");
  }

  QuantileSurface s;
  s.q = q;
  s.t = t;
  s.beta = warm_start ? *warm_start : wls_solve(Xs, ys, period_w);

  // an exactly interpolating fit leaves only rounding noise in the
  // residuals; everything downstream divides by the scale, so report it
  const double y_scale = ys.cwiseAbs().maxCoeff();

  Eigen::VectorXd e = ys - Xs * s.beta;
  Eigen::VectorXd w(m);
  std::vector<double> resid(m);
  for (int l = 1; l <= ctrl.max_iter; ++l) {
    for (int i = 0; i < m; ++i) resid[static_cast<std::size_t>(i)] = e[i];
    s.sigma = robust_scale(resid).sigma;
    if (s.sigma <= 1e-10 * (1.0 + y_scale)) {
      throw numeric_error("degenerate scale: residual spread at rounding level");
    }

    double obj_before = 0.0;
    for (int i = 0; i < m; ++i) {
      w[i] = period_w[i] * irls_weight(e[i], s.sigma, cfg);
      obj_before += period_w[i] * rho_q(e[i], s.sigma, cfg);
    }

    const Eigen::VectorXd beta_new = wls_solve(Xs, ys, w);
    const Eigen::VectorXd e_new = ys - Xs * beta_new;

    // descent of the weighted objective at this iteration's scale
    double obj_after = 0.0;
    for (int i = 0; i < m; ++i) obj_after += period_w[i] * rho_q(e_new[i], s.sigma, cfg);
    ++s.objective_steps;
    if (obj_after <= obj_before + 1e-12 * (1.0 + std::abs(obj_before))) ++s.monotone_steps;

    const double delta = (beta_new - s.beta).cwiseAbs().maxCoeff();
    s.beta = beta_new;
    s.weights = w;
    s.iterations = l;
    e = e_new;
    if (delta < ctrl.tol) {
      s.converged = true;
      break;
    }
  }
  return s;
}

}  // namespace

void QuantileGrid::interpolate(double q, Eigen::VectorXd& beta, double& sigma) const {
  if (qs.empty()) throw invalid_argument("empty quantile grid");
  if (q <= qs.front()) {
    beta = surfaces.front().beta;
    sigma = surfaces.front().sigma;
    return;
  }
  if (q >= qs.back()) {
    beta = surfaces.back().beta;
    sigma = surfaces.back().sigma;
    return;
  }
  const auto it = std::upper_bound(qs.begin(), qs.end(), q);
  const std::size_t hi = static_cast<std::size_t>(it - qs.begin());
  const std::size_t lo = hi - 1;
  const double a = (q - qs[lo]) / (qs[hi] - qs[lo]);
  beta = (1.0 - a) * surfaces[lo].beta + a * surfaces[hi].beta;
  sigma = (1.0 - a) * surfaces[lo].sigma + a * surfaces[hi].sigma;
}

std::vector<int> stacked_rows(const PanelFrame& frame, const RelevantSets& sets, int t) {
  if (t < 1 || t > frame.T) throw invalid_argument("period out of range");
  std::vector<int> rows;
  for (int d = 1; d <= frame.D; ++d) {
    for (int i = sets.t_lo[t - 1]; i <= t; ++i) {
      const auto& cell = frame.sample_rows(d, i);
      rows.insert(rows.end(), cell.begin(), cell.end());
    }
  }
  return rows;
}

QuantileSurface fit_mq3(const PanelFrame& frame, double q, const RobustConfig& cfg,
                        const ConvergenceControl& ctrl,
                        const Eigen::VectorXd* warm_start) {
  const int m = static_cast<int>(frame.sd.size());
  Eigen::VectorXd period_w = Eigen::VectorXd::Ones(m);
  QuantileSurface s = irls_fit(frame.X, frame.y, period_w, q, 0, cfg, ctrl, warm_start);
  s.rows.resize(m);
  for (int i = 0; i < m; ++i) s.rows[static_cast<std::size_t>(i)] = i;
  return s;
}

QuantileSurface fit_twmq(const PanelFrame& frame, double q, int t,
                         const Eigen::MatrixXd& w, const RelevantSets& sets,
                         const RobustConfig& cfg, const ConvergenceControl& ctrl) {
  const std::vector<int> rows = stacked_rows(frame, sets, t);
  const int m = static_cast<int>(rows.size());
  if (m == 0) throw numeric_error("no sampled units in the relevant periods");
  Eigen::MatrixXd Xs(m, frame.p);
  Eigen::VectorXd ys(m), period_w(m);
  for (int i = 0; i < m; ++i) {
    const int r = rows[static_cast<std::size_t>(i)];
    Xs.row(i) = frame.X.row(r);
    ys[i] = frame.y[r];
    period_w[i] = w(t - 1, frame.st[static_cast<std::size_t>(r)] - 1);
  }
  QuantileSurface s = irls_fit(Xs, ys, period_w, q, t, cfg, ctrl, nullptr);
  s.rows = rows;
  return s;
}

QuantileGrid fit_grid(const PanelFrame& frame, const std::vector<double>& qs,
                      const RobustConfig& cfg, const ConvergenceControl& ctrl) {
  if (qs.empty()) throw invalid_argument("quantile grid must not be empty");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (!(qs[i] > 0.0 && qs[i] < 1.0)) throw invalid_argument("grid quantiles must lie in (0,1)");
    if (i && !(qs[i] > qs[i - 1])) throw invalid_argument("grid quantiles must be strictly increasing");
  }
  QuantileGrid grid;
  grid.qs = qs;
  grid.surfaces.reserve(qs.size());
  const Eigen::VectorXd* warm = nullptr;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    try {
      grid.surfaces.push_back(fit_mq3(frame, qs[i], cfg, ctrl, warm));
    } catch (const Error& err) {
      throw Error(err.code(), "fit at q=" + std::to_string(qs[i]) + " failed: " + err.what());
    }
    warm = &grid.surfaces.back().beta;
  }
  return grid;
}

double find_crossing_q(double y, const Eigen::VectorXd& f, const std::vector<double>& qs) {
  const std::size_t m = qs.size();
  if (m == 1) return qs[0];
  for (std::size_t k = 0; k + 1 < m; ++k) {
    const double a = f[static_cast<Eigen::Index>(k)] - y;
    const double b = f[static_cast<Eigen::Index>(k + 1)] - y;
    if (a * b <= 0.0) {
      if (a == 0.0) return qs[k];
      return qs[k] + (y - f[static_cast<Eigen::Index>(k)]) /
                         (f[static_cast<Eigen::Index>(k + 1)] - f[static_cast<Eigen::Index>(k)]) *
                         (qs[k + 1] - qs[k]);
    }
  }
  // never bracketed: y sits below every surface or above every surface
  return y < f[0] ? qs.front() : qs.back();
}

double unit_mq_coefficient(const Eigen::RowVectorXd& x, double y, const QuantileGrid& grid) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(grid.qs.size()));
  for (std::size_t k = 0; k < grid.qs.size(); ++k) {
    f[static_cast<Eigen::Index>(k)] = x * grid.surfaces[k].beta;
  }
  return find_crossing_q(y, f, grid.qs);
}

std::vector<double> unit_mq_coefficients(const PanelFrame& frame, const QuantileGrid& grid) {
  const int m = static_cast<int>(frame.sd.size());
  const int G = static_cast<int>(grid.qs.size());
  Eigen::MatrixXd B(frame.p, G);
  for (int g = 0; g < G; ++g) B.col(g) = grid.surfaces[static_cast<std::size_t>(g)].beta;
  const Eigen::MatrixXd F = frame.X * B;  // m x G fitted values
  std::vector<double> qhat(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    qhat[static_cast<std::size_t>(i)] = find_crossing_q(frame.y[i], F.row(i).transpose(), grid.qs);
  }
  return qhat;
}

std::vector<DomainTheta> domain_thetas(const PanelFrame& frame,
                                       const std::vector<double>& qhat) {
  std::vector<double> sum(static_cast<std::size_t>(frame.D), 0.0);
  std::vector<int> count(static_cast<std::size_t>(frame.D), 0);
  for (std::size_t r = 0; r < frame.sd.size(); ++r) {
    sum[static_cast<std::size_t>(frame.sd[r] - 1)] += qhat[r];
    count[static_cast<std::size_t>(frame.sd[r] - 1)] += 1;
  }
  std::vector<DomainTheta> thetas(static_cast<std::size_t>(frame.D));
  for (int d = 1; d <= frame.D; ++d) {
    if (count[static_cast<std::size_t>(d - 1)] == 0) {
      throw numeric_error("domain " + std::to_string(d) + " has no sampled units");
    }
    thetas[static_cast<std::size_t>(d - 1)] = {
        d, sum[static_cast<std::size_t>(d - 1)] / count[static_cast<std::size_t>(d - 1)]};
  }
  return thetas;
}

std::vector<double> default_quantile_grid() {
  std::vector<double> qs;
  for (int i = 1; i <= 49; ++i) qs.push_back(static_cast<double>(i) / 50.0);
  return qs;
}

}  // namespace twmq
