#include "temporal_weights.hpp"

#include <cmath>
#include <limits>

#include "errors.hpp"

namespace twmq {

Eigen::MatrixXd subdomain_residuals(const PanelFrame& frame, const QuantileGrid& grid,
                                    const std::vector<DomainTheta>& thetas) {
  Eigen::MatrixXd r(frame.D, frame.T);
  Eigen::VectorXd beta;
  double sigma = 0.0;
  for (int d = 1; d <= frame.D; ++d) {
    grid.interpolate(thetas[static_cast<std::size_t>(d - 1)].theta_hat, beta, sigma);
    for (int t = 1; t <= frame.T; ++t) {
      const auto& rows = frame.sample_rows(d, t);
      if (rows.empty()) {
        throw numeric_error("empty cell (d=" + std::to_string(d) + ",t=" +
                            std::to_string(t) + ") in subdomain residuals");
      }
      double s = 0.0;
      for (int row : rows) s += frame.y[row] - frame.X.row(row) * beta;
      r(d - 1, t - 1) = s / static_cast<double>(rows.size());
    }
  }
  return r;
}

namespace {

// all roots of 1 - phi_1 u - ... - phi_P u^P outside the unit circle
bool is_stationary(const std::vector<double>& phi) {
  const int P = static_cast<int>(phi.size());
  if (P == 0) return true;
  if (phi[static_cast<std::size_t>(P - 1)] == 0.0) return false;
  // companion matrix of u^P - (phi_1/phi_P^{-1}) ... use the reversed
  // polynomial: roots of z^P - phi_1 z^{P-1} - ... - phi_P are the
  // reciprocals, so stationarity means all |z| < 1.
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(P, P);
  for (int k = 0; k < P; ++k) C(0, k) = phi[static_cast<std::size_t>(k)];
  for (int k = 1; k < P; ++k) C(k, k - 1) = 1.0;
  const Eigen::VectorXcd ev = C.eigenvalues();
  for (int k = 0; k < P; ++k) {
    if (std::abs(ev[k]) >= 1.0 - 1e-10) return false;
  }
  return true;
}

struct CandidateFit {
  std::vector<double> phi;
  double phi0 = 0.0;
  double sigma_a = 0.0;
  double aic = 0.0;
  bool ok = false;
};

// conditional least squares at the seasonal lags over the common sample
// t > P_max; `stride` selects the seasonal step (D for the stacked series,
// 1 for the period-mean series)
CandidateFit cls_fit(const Eigen::VectorXd& z, int block, int T, int P, int P_max,
                     bool small_sample_correction) {
  CandidateFit fit;
  const int rows = (T - P_max) * block;
  const int cols = P + 1;
  if (rows <= cols) return fit;
  Eigen::MatrixXd A(rows, cols);
  Eigen::VectorXd b(rows);
  int r = 0;
  for (int t = P_max + 1; t <= T; ++t) {
    for (int d = 1; d <= block; ++d) {
      const int i = (t - 1) * block + (d - 1);
      A(r, 0) = 1.0;
      for (int k = 1; k <= P; ++k) A(r, k) = z[i - k * block];
      b[r] = z[i];
      ++r;
    }
  }
  const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
  const double rss = (b - A * coef).squaredNorm();
  fit.phi0 = coef[0];
  fit.phi.assign(P, 0.0);
  for (int k = 1; k <= P; ++k) fit.phi[static_cast<std::size_t>(k - 1)] = coef[k];
  const double n = static_cast<double>(rows);
  const double pars = static_cast<double>(P + 2);  // coefficients plus variance
  const double s2 = std::max(rss / n, 1e-300);
  fit.sigma_a = std::sqrt(s2);
  fit.aic = n * std::log(s2) + 2.0 * pars;
  if (small_sample_correction) {
    if (n - pars - 1.0 <= 0.0) return fit;  // not enough residual information
    fit.aic += 2.0 * pars * (pars + 1.0) / (n - pars - 1.0);
  }
  fit.ok = true;
  return fit;
}

}  // namespace

SeasonalArFit fit_seasonal_ar(const Eigen::MatrixXd& residual_table, int P_max) {
  const int D = static_cast<int>(residual_table.rows());
  const int T = static_cast<int>(residual_table.cols());
  if (D < 1 || T < 1) throw invalid_argument("empty residual table");
  if (P_max < 0 || P_max > T - 1) throw invalid_argument("P_max must lie in [0, T-1]");

  Eigen::VectorXd z(static_cast<Eigen::Index>(D) * T);
  for (int t = 1; t <= T; ++t)
    for (int d = 1; d <= D; ++d) z[(t - 1) * D + (d - 1)] = residual_table(d - 1, t - 1);

  // The common temporal signal is shared by every domain of a period, so
  // stacked-series residuals are block-correlated and an information
  // criterion over D*(T-P_max) rows badly overstates the evidence for
  // higher orders. Order selection therefore runs on the period-mean
  // series (one observation per block) with the small-sample correction;
  // the coefficients of the selected order come from the stacked series.
  Eigen::VectorXd zbar(T);
  for (int t = 1; t <= T; ++t) zbar[t - 1] = residual_table.col(t - 1).mean();

  SeasonalArFit best;
  best.D = D;
  double best_aic = std::numeric_limits<double>::infinity();
  bool any_candidate = false;
  bool any_positive_ok = false;
  for (int P = 0; P <= P_max; ++P) {
    const CandidateFit rank = cls_fit(zbar, 1, T, P, P_max, true);
    if (!rank.ok) continue;
    const CandidateFit cand = cls_fit(z, D, T, P, P_max, false);
    if (!cand.ok) continue;
    if (P >= 1 && !is_stationary(cand.phi)) continue;
    if (P >= 1) any_positive_ok = true;
    any_candidate = true;
    if (rank.aic < best_aic) {
      best_aic = rank.aic;
      best.P = P;
      best.phi = cand.phi;
      best.phi0 = cand.phi0;
      best.sigma_a = cand.sigma_a;
      best.aic = rank.aic;
    }
  }
  if (!any_candidate) {
    // not enough observations even for the intercept-only model
    best.P = 0;
    best.phi.clear();
    best.phi0 = residual_table.mean();
    best.sigma_a = 0.0;
    best.aic = 0.0;
    best.fallback = true;
    return best;
  }
  best.fallback = (P_max >= 1 && !any_positive_ok);
  return best;
}

TemporalWeightPlan weight_plan(const SeasonalArFit& ar, const PanelFrame& frame) {
  TemporalWeightPlan plan;
  plan.ar = ar;
  plan.sets = relevant_sets(frame, ar.P);
  plan.w = Eigen::MatrixXd::Zero(frame.T, frame.T);
  for (int t = 1; t <= frame.T; ++t) {
    double S_t = 0.0;
    const int width = std::min(t, ar.P);
    for (int k = 1; k <= width; ++k) S_t += std::abs(ar.phi[static_cast<std::size_t>(k - 1)]);
    if (ar.P == 0 || S_t <= 0.0) {
      plan.w(t - 1, t - 1) = 1.0;
      continue;
    }
    for (int i = std::max(1, t - ar.P + 1); i <= t; ++i) {
      plan.w(t - 1, i - 1) = std::abs(ar.phi[static_cast<std::size_t>(t - i)]) / S_t;
    }
  }
  return plan;
}

}  // namespace twmq
