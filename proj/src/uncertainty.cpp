#include "uncertainty.hpp"

#include <cmath>

#include "errors.hpp"
#include "robust_kernel.hpp"
#include "stats_util.hpp"

namespace twmq {

std::string estimator_name(MseEstimator est) {
  switch (est) {
    case MseEstimator::Tmq11: return "tmq11";
    case MseEstimator::Tmq12: return "tmq12";
    case MseEstimator::Tmq21: return "tmq21";
    case MseEstimator::Tmq22: return "tmq22";
    case MseEstimator::Btmq1: return "btmq1";
    case MseEstimator::Btmq2: return "btmq2";
    case MseEstimator::Btmq3: return "btmq3";
  }
  return "?";
}

MseEstimator estimator_from_name(const std::string& name) {
  for (MseEstimator est : {MseEstimator::Tmq11, MseEstimator::Tmq12, MseEstimator::Tmq21,
                           MseEstimator::Tmq22, MseEstimator::Btmq1, MseEstimator::Btmq2,
                           MseEstimator::Btmq3}) {
    if (estimator_name(est) == name) return est;
  }
  throw invalid_argument("unknown MSE estimator '" + name + "'");
}

Eigen::VectorXd residuals_under(const PanelFrame& frame, const std::vector<int>& rows,
                                const Eigen::VectorXd& beta) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] = frame.y[rows[i]] - frame.X.row(rows[i]) * beta;
  }
  return r;
}

PseudoLinearWeights pseudo_weights(const PanelFrame& frame, const QuantileSurface& surf,
                                   const TemporalWeightPlan& plan, int d, int t) {
  if (surf.t != t) throw invalid_argument("surface was fitted for a different period");
  PseudoLinearWeights pw;
  pw.d = d;
  pw.t = t;
  pw.rows = surf.rows;
  const int m = static_cast<int>(pw.rows.size());
  const int p = frame.p;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < m; ++i) {
    A.selfadjointView<Eigen::Lower>().rankUpdate(frame.X.row(pw.rows[static_cast<std::size_t>(i)]).transpose(),
                                                 surf.weights[i]);
  }
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw numeric_error("singular X'WX in pseudo-linear weights");
  const Eigen::VectorXd v = lu.solve(frame.rsum[frame.cell(d, t)]);

  pw.z.resize(m);
  pw.eps.resize(m);
  for (int i = 0; i < m; ++i) {
    const int row = pw.rows[static_cast<std::size_t>(i)];
    const double xv = frame.X.row(row) * v;
    pw.z[i] = surf.weights[i] * xv;
    pw.eps[i] = (frame.sd[static_cast<std::size_t>(row)] == d &&
                 frame.st[static_cast<std::size_t>(row)] == t)
                    ? 1.0
                    : 0.0;
  }
  pw.a = pw.eps + pw.z;

  const int n_cell = frame.n_dt(d - 1, t - 1);
  const int N_cell = frame.N_dt(d - 1, t - 1);
  double factor = 0.0;
  if (N_cell > n_cell) {
    const int n_dt_rel = plan.sets.n_d_of_t(d - 1, t - 1);
    if (n_dt_rel <= 1) {
      throw numeric_error("finite-population factor undefined: n_d(t) <= 1 in cell (d=" +
                          std::to_string(d) + ",t=" + std::to_string(t) + ")");
    }
    factor = static_cast<double>(N_cell - n_cell) / static_cast<double>(n_dt_rel - 1);
  }
  pw.lambda = pw.z.cwiseProduct(pw.z) + factor * pw.eps;
  return pw;
}

SandwichVariance sandwich_v_beta(const PanelFrame& frame, const QuantileSurface& surf,
                                 const TemporalWeightPlan& plan, double c_psi,
                                 double epsilon_zero) {
  (void)plan;
  const RobustConfig cfg{c_psi, surf.q, epsilon_zero};
  const int m = static_cast<int>(surf.rows.size());
  const int p = frame.p;
  if (m <= p) throw numeric_error("sandwich variance undefined: n(t) <= p");

  Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(p, p);
  double sum_psi2 = 0.0;
  double sum_psidot = 0.0;
  for (int i = 0; i < m; ++i) {
    const int row = surf.rows[static_cast<std::size_t>(i)];
    const double e = frame.y[row] - frame.X.row(row) * surf.beta;
    const double psi = psi_q(e, surf.sigma, cfg);
    sum_psi2 += psi * psi;
    // derivative in the standardized residual: keeps the estimator on the
    // sigma^2 scale of a coefficient variance
    sum_psidot += surf.sigma * psi_q_dot(e, surf.sigma, cfg);
    xx.selfadjointView<Eigen::Lower>().rankUpdate(frame.X.row(row).transpose(), 1.0);
  }
  if (sum_psidot == 0.0) {
    throw numeric_error("degenerate sandwich: every residual is clipped");
  }
  xx = xx.selfadjointView<Eigen::Lower>();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xx);
  if (!lu.isInvertible()) throw numeric_error("singular x-moment matrix in sandwich variance");

  const double nt = static_cast<double>(m);
  const double scale = nt * nt * surf.sigma * surf.sigma / (nt - static_cast<double>(p)) *
                       sum_psi2 / (sum_psidot * sum_psidot);
  SandwichVariance out;
  out.V_beta = scale * lu.inverse();
  out.V_beta = 0.5 * (out.V_beta + out.V_beta.transpose()).eval();
  return out;
}

double var_pseudo(const PanelFrame& frame, const PseudoLinearWeights& pw,
                  const Eigen::VectorXd& resid) {
  const double N = static_cast<double>(frame.N_dt(pw.d - 1, pw.t - 1));
  double s = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) s += pw.lambda[i] * resid[i] * resid[i];
  return s / (N * N);
}

double var_ybar_r(const PanelFrame& frame, const RelevantSets& sets,
                  const std::vector<Eigen::VectorXd>& theta_betas, int d, int t,
                  int variant) {
  const int n_cell = frame.n_dt(d - 1, t - 1);
  const int N_cell = frame.N_dt(d - 1, t - 1);
  if (N_cell == n_cell) return 0.0;  // no non-sampled units to predict
  if (variant == 1) {
    const int n_rel = sets.n_d_of_t(d - 1, t - 1);
    if (n_rel < 2) throw numeric_error("var_ybar_r variant 1 needs n_d(t) >= 2");
    double s = 0.0;
    const Eigen::VectorXd& beta = theta_betas[static_cast<std::size_t>(d - 1)];
    for (int row : frame.sample_rows(d, t)) {
      const double e = frame.y[row] - frame.X.row(row) * beta;
      s += e * e;
    }
    return s / (static_cast<double>(N_cell - n_cell) * static_cast<double>(n_rel - 1));
  }
  if (variant == 2) {
    int n_period = 0;
    double s = 0.0;
    for (int g = 1; g <= frame.D; ++g) {
      const Eigen::VectorXd& beta = theta_betas[static_cast<std::size_t>(g - 1)];
      for (int row : frame.sample_rows(g, t)) {
        const double e = frame.y[row] - frame.X.row(row) * beta;
        s += e * e;
        ++n_period;
      }
    }
    if (n_period <= frame.D) throw numeric_error("var_ybar_r variant 2 needs n_.t > D");
    return s / (static_cast<double>(N_cell - n_cell) * static_cast<double>(n_period - frame.D));
  }
  throw invalid_argument("var_ybar_r variant must be 1 or 2");
}

double bias_tmq(const PanelFrame& frame, const PseudoLinearWeights& pw,
                const Eigen::VectorXd& fitted_own, const Eigen::VectorXd& beta_target) {
  const double N = static_cast<double>(frame.N_dt(pw.d - 1, pw.t - 1));
  double s = 0.0;
  for (Eigen::Index i = 0; i < fitted_own.size(); ++i) s += pw.a[i] * fitted_own[i];
  const double target = frame.usum_x(pw.d, pw.t).dot(beta_target);
  return (s - target) / N;
}

MseCalculator::MseCalculator(const PanelFrame& frame, const MqModel& model)
    : frame_(frame), model_(model), periods_(static_cast<std::size_t>(frame.T)) {}

const MseCalculator::PeriodCache& MseCalculator::period(int t) {
  PeriodCache& pc = periods_[static_cast<std::size_t>(t - 1)];
  if (pc.ready) return pc;
  pc.rows = model_.surface_median(t).rows;
  const int m = static_cast<int>(pc.rows.size());
  pc.median_resid = residuals_under(frame_, pc.rows, model_.surface_median(t).beta);
  pc.own_resid.resize(m);
  pc.fitted_own.resize(m);
  for (int i = 0; i < m; ++i) {
    const int row = pc.rows[static_cast<std::size_t>(i)];
    const int g = frame_.sd[static_cast<std::size_t>(row)];
    const double fit = frame_.X.row(row) * model_.surface_theta(g, t).beta;
    pc.fitted_own[i] = fit;
    pc.own_resid[i] = frame_.y[row] - fit;
  }
  pc.ready = true;
  return pc;
}

const MseCalculator::CellCache& MseCalculator::cell(int d, int t) {
  if (cell_.ready && cell_.d == d && cell_.t == t) return cell_;
  const PeriodCache& pc = period(t);
  const QuantileSurface& surf = model_.surface_theta(d, t);

  CellCache c;
  c.d = d;
  c.t = t;
  c.pw = pseudo_weights(frame_, surf, model_.plan, d, t);
  c.resid_target = residuals_under(frame_, c.pw.rows, surf.beta);
  c.V_beta = sandwich_v_beta(frame_, surf, model_.plan, model_.opts.c_psi,
                             model_.opts.epsilon_zero)
                 .V_beta;
  c.bias = bias_tmq(frame_, c.pw, pc.fitted_own, surf.beta);

  std::vector<Eigen::VectorXd> theta_betas(static_cast<std::size_t>(frame_.D));
  for (int g = 1; g <= frame_.D; ++g) {
    theta_betas[static_cast<std::size_t>(g - 1)] = model_.surface_theta(g, t).beta;
  }
  c.var1 = var_ybar_r(frame_, model_.plan.sets, theta_betas, d, t, 1);
  c.var2 = var_ybar_r(frame_, model_.plan.sets, theta_betas, d, t, 2);
  c.v11 = var_pseudo(frame_, c.pw, pc.median_resid);
  c.v12 = var_pseudo(frame_, c.pw, pc.own_resid);

  cell_ = std::move(c);
  cell_.ready = true;
  return cell_;
}

MseCalculator::CellInputs MseCalculator::selection_inputs(int d, int t) {
  const CellCache& c = cell(d, t);
  const QuantileSurface& surf = model_.surface_theta(d, t);
  CellInputs in;
  in.sigma = surf.sigma;
  in.n_dt = frame_.n_dt(d - 1, t - 1);
  in.N_dt = frame_.N_dt(d - 1, t - 1);
  in.bias_hat = c.bias;
  for (Eigen::Index i = 0; i < c.pw.eps.size(); ++i) {
    if (c.pw.eps[i] == 1.0) in.u_hat.push_back(c.resid_target[i] / surf.sigma);
  }
  return in;
}

MseReport MseCalculator::compute(int d, int t, MseEstimator est, double c_phi) {
  const CellCache& c = cell(d, t);
  const QuantileSurface& surf = model_.surface_theta(d, t);
  const int n = frame_.n_dt(d - 1, t - 1);
  const int N = frame_.N_dt(d - 1, t - 1);
  const double f = static_cast<double>(n) / static_cast<double>(N);
  const double omf = 1.0 - f;

  MseReport rep;
  rep.d = d;
  rep.t = t;
  rep.estimator = est;

  const auto finish = [&rep]() {
    rep.mse = rep.variance_part + rep.bias_part * rep.bias_part;
    rep.rmse = std::sqrt(std::max(rep.mse, 0.0));
  };

  switch (est) {
    case MseEstimator::Tmq11:
    case MseEstimator::Tmq12: {
      rep.variance_part = est == MseEstimator::Tmq11 ? c.v11 : c.v12;
      rep.bias_part = c.bias;
      finish();
      return rep;
    }
    case MseEstimator::Tmq21:
    case MseEstimator::Tmq22: {
      const double var_l = est == MseEstimator::Tmq21 ? c.var1 : c.var2;
      double quad = 0.0;
      if (N > n) {
        const Eigen::VectorXd xbar_r =
            frame_.rsum[frame_.cell(d, t)] / static_cast<double>(N - n);
        quad = xbar_r.dot(c.V_beta * xbar_r);
      }
      rep.variance_part = omf * omf * (quad + var_l);
      rep.bias_part = c.bias;
      finish();
      return rep;
    }
    default:
      break;
  }

  // bias-corrected variants
  if (c_phi < 0.0 || !std::isfinite(c_phi)) {
    throw invalid_argument("c_phi must be a nonnegative real");
  }
  const double sigma = surf.sigma;
  std::vector<double> u_cell;
  std::vector<Eigen::Index> cell_idx;
  for (Eigen::Index i = 0; i < c.pw.eps.size(); ++i) {
    if (c.pw.eps[i] == 1.0) {
      u_cell.push_back(c.resid_target[i] / sigma);
      cell_idx.push_back(i);
    }
  }

  if (est == MseEstimator::Btmq1 || est == MseEstimator::Btmq2) {
    double sum_phi = 0.0, sum_phi2 = 0.0;
    for (double u : u_cell) {
      const double ph = c_phi > 0.0 ? huber_psi(u, c_phi) : 0.0;
      sum_phi += ph;
      sum_phi2 += ph * ph;
    }
    const Eigen::VectorXd xbar_s = frame_.sample_sum_x(d, t) / static_cast<double>(n);
    Eigen::VectorXd xbar_r = Eigen::VectorXd::Zero(frame_.p);
    if (N > n) xbar_r = frame_.rsum[frame_.cell(d, t)] / static_cast<double>(N - n);
    const Eigen::VectorXd dx = xbar_r - xbar_s;
    const double sn = sigma / static_cast<double>(n);
    const double var_l = est == MseEstimator::Btmq1 ? c.var1 : c.var2;
    rep.variance_part =
        omf * omf * (sn * sn * sum_phi2 + (N > n ? dx.dot(c.V_beta * dx) : 0.0) + var_l);
    rep.bias_part = c.bias + omf * sn * sum_phi;
    finish();
    return rep;
  }

  // Btmq3: the closed-form first-order estimator; needs unit-level
  // non-sampled covariates and the unit quantile coefficients
  if (frame_.mode != FrameMode::UnitPopulation) {
    throw unsupported_error("btmq3 requires a unit-level population frame");
  }
  if (n < 2) throw numeric_error("btmq3 needs n_dt >= 2 for the coefficient variance");

  const double theta = model_.thetas[static_cast<std::size_t>(d - 1)].theta_hat;
  std::vector<double> q_cell;
  for (std::size_t k = 0; k < cell_idx.size(); ++k) {
    const int row = c.pw.rows[static_cast<std::size_t>(cell_idx[k])];
    q_cell.push_back(model_.qhat[static_cast<std::size_t>(row)]);
  }
  const double xi2 = sample_variance(q_cell);

  double avg_sq_all = 0.0;
  for (double qv : q_cell) {
    const double dq = qv - theta;
    avg_sq_all += dq * dq;
    if (dq * dq < 1e-6) rep.stability_warning = true;
  }
  avg_sq_all /= static_cast<double>(n);

  double sum_e2_all = 0.0, sum_e2_G = 0.0, avg_sq_G = 0.0, quad_G = 0.0;
  double sgn_out = 0.0;
  int card_G = 0;
  for (std::size_t k = 0; k < u_cell.size(); ++k) {
    const double u = u_cell[k];
    const double e = u * sigma;
    sum_e2_all += e * e;
    if (std::abs(u) < c_phi) {
      ++card_G;
      sum_e2_G += e * e;
      const double dq = q_cell[k] - theta;
      avg_sq_G += dq * dq;
      const Eigen::RowVectorXd x = frame_.X.row(c.pw.rows[static_cast<std::size_t>(cell_idx[k])]);
      quad_G += (x * c.V_beta).dot(x);
    } else if (e != 0.0) {
      sgn_out += e > 0.0 ? 1.0 : -1.0;
    }
  }

  const double Nr = static_cast<double>(N);
  const double nr = static_cast<double>(n);
  double term1 = 0.0;
  if (card_G > 0) {
    avg_sq_G /= static_cast<double>(card_G);
    if (avg_sq_G > 0.0) {
      term1 = omf * omf * xi2 / (nr * nr) / avg_sq_G * sum_e2_G;
    }
  }
  double term2 = 0.0;
  if (avg_sq_all > 0.0) {
    term2 = (Nr - nr) / nr * xi2 / (Nr * Nr) / avg_sq_all * sum_e2_all;
  }
  double quad_r = 0.0;
  for (int row : frame_.nonsample_rows(d, t)) {
    const Eigen::RowVectorXd x = frame_.Xr.row(row);
    quad_r += (x * c.V_beta).dot(x);
  }
  const double term3 = 2.0 * omf * omf / (nr * nr) * quad_G + quad_r / (Nr * Nr);
  const double bias_sum = c_phi * sgn_out + sum_e2_G / (2.0 * sigma);
  rep.variance_part = term1 + term2 + term3;
  rep.bias_part = omf / nr * bias_sum;
  finish();
  return rep;
}

std::vector<MseReport> MseCalculator::all(int d, int t, double c_phi) {
  std::vector<MseReport> out;
  for (MseEstimator est : {MseEstimator::Tmq11, MseEstimator::Tmq12, MseEstimator::Tmq21,
                           MseEstimator::Tmq22, MseEstimator::Btmq1, MseEstimator::Btmq2,
                           MseEstimator::Btmq3}) {
    out.push_back(compute(d, t, est, c_phi));
  }
  return out;
}

}  // namespace twmq
