#include "sim_harness.hpp"

#include <cmath>
#include <limits>

#include "errors.hpp"
#include "parallel.hpp"
#include "robustness_select.hpp"

namespace twmq {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// distribution parameters of the generating model; second moments are
// variances
constexpr double kBeta1 = 100.0;
constexpr double kBeta2 = 5.0;
constexpr double kVarU1 = 3.0;
constexpr double kVarE = 6.0;
constexpr double kOutlierMeanE = 20.0;
constexpr double kOutlierVarE = 150.0;
constexpr double kCleanShare = 0.97;
constexpr double kOutlierMeanU1 = 9.0;
constexpr double kOutlierVarU1 = 20.0;
constexpr int kAr3BurnIn = 200;

}  // namespace

Scenario scenario_from_name(const std::string& name) {
  if (name == "0,0" || name == "[0,0]" || name == "clean") return Scenario::Clean;
  if (name == "e,0" || name == "[e,0]" || name == "unit") return Scenario::UnitOutliers;
  if (name == "e,u" || name == "[e,u]" || name == "both") return Scenario::BothOutliers;
  throw invalid_argument("unknown scenario '" + name + "'");
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Clean: return "[0,0]";
    case Scenario::UnitOutliers: return "[e,0]";
    case Scenario::BothOutliers: return "[e,u]";
  }
  return "?";
}

void SimDesign::validate() const {
  if (D < 2 || T < 1 || N_dt < 1 || n_dt < 1) throw invalid_argument("bad design dimensions");
  if (n_dt > N_dt) throw invalid_argument("n_dt must not exceed N_dt");
  if (S < 1) throw invalid_argument("S must be at least 1");
  if (time_case == TimeCase::Ar1 && !(rho > -1.0 && rho < 1.0)) {
    throw invalid_argument("rho must lie in (-1, 1)");
  }
  if (c_fixed < 0.0) throw invalid_argument("c_phi must be nonnegative");
}

namespace {

// Case 1 time effects: multivariate normal with covariance
// sigma_u^2 / (1 - rho^2) * rho^|i-j| (the prefactor sits inside the
// printed correlation matrix, so sigma_u is not the marginal sd).
std::vector<double> draw_time_effects_ar1(int T, double sigma_u, double rho, Rng& rng) {
  Eigen::MatrixXd cov(T, T);
  const double scale = sigma_u * sigma_u / (1.0 - rho * rho);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) cov(i, j) = scale * std::pow(rho, std::abs(i - j));
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  Eigen::VectorXd z(T);
  for (int i = 0; i < T; ++i) z[i] = rng.normal();
  const Eigen::VectorXd u = llt.matrixL() * z;
  return std::vector<double>(u.data(), u.data() + T);
}

std::vector<double> draw_time_effects_ar3(int T, const std::vector<double>& phi,
                                          double sigma, Rng& rng) {
  const int P = static_cast<int>(phi.size());
  std::vector<double> z(static_cast<std::size_t>(kAr3BurnIn + T), 0.0);
  for (int i = 0; i < kAr3BurnIn + T; ++i) {
    double v = sigma * rng.normal();
    for (int k = 1; k <= P && i - k >= 0; ++k) {
      v += phi[static_cast<std::size_t>(k - 1)] * z[static_cast<std::size_t>(i - k)];
    }
    z[static_cast<std::size_t>(i)] = v;
  }
  return std::vector<double>(z.end() - T, z.end());
}

}  // namespace

Population generate_population(const SimDesign& design, Rng& rng) {
  Population pop;
  pop.D = design.D;
  pop.T = design.T;
  pop.N_dt = design.N_dt;
  const std::size_t total =
      static_cast<std::size_t>(design.D) * design.T * design.N_dt;
  pop.x.resize(total);
  pop.y.resize(total);
  pop.true_mean = Eigen::MatrixXd::Zero(design.D, design.T);

  // area-level outliers hit the top tenth of the areas (the paper's
  // 37..40 of 40)
  const int n_outlier_areas = std::max(1, design.D / 10);
  const int first_outlier = design.D - n_outlier_areas + 1;

  std::vector<double> u1(static_cast<std::size_t>(design.D));
  for (int d = 1; d <= design.D; ++d) {
    const bool outlier_area =
        design.scenario == Scenario::BothOutliers && d >= first_outlier;
    u1[static_cast<std::size_t>(d - 1)] =
        outlier_area ? rng.normal(kOutlierMeanU1, std::sqrt(kOutlierVarU1))
                     : rng.normal(0.0, std::sqrt(kVarU1));
  }

  const std::vector<double> u2 =
      design.time_case == TimeCase::Ar1
          ? draw_time_effects_ar1(design.T, design.sigma_u, design.rho, rng)
          : draw_time_effects_ar3(design.T, design.ar_phi, design.ar_sigma, rng);

  const bool unit_outliers = design.scenario != Scenario::Clean;
  std::size_t idx = 0;
  for (int d = 1; d <= design.D; ++d) {
    for (int t = 1; t <= design.T; ++t) {
      double sum = 0.0;
      for (int j = 0; j < design.N_dt; ++j, ++idx) {
        const double xv = rng.lognormal(1.0, 0.5);
        double e;
        if (unit_outliers && !rng.bernoulli(kCleanShare)) {
          e = rng.normal(kOutlierMeanE, std::sqrt(kOutlierVarE));
        } else {
          e = rng.normal(0.0, std::sqrt(kVarE));
        }
        const double yv = kBeta1 + kBeta2 * xv + u1[static_cast<std::size_t>(d - 1)] +
                          u2[static_cast<std::size_t>(t - 1)] + e;
        pop.x[idx] = xv;
        pop.y[idx] = yv;
        sum += yv;
      }
      pop.true_mean(d - 1, t - 1) = sum / design.N_dt;
    }
  }
  return pop;
}

PanelFrame draw_sample(const Population& pop, int n_dt, Rng& rng) {
  if (n_dt < 1 || n_dt > pop.N_dt) throw invalid_argument("bad per-cell sample size");
  PanelFrame frame;
  frame.mode = FrameMode::UnitPopulation;
  frame.D = pop.D;
  frame.T = pop.T;
  frame.p = 2;

  const int cells = pop.D * pop.T;
  const int n_total = cells * n_dt;
  const int r_total = cells * (pop.N_dt - n_dt);
  frame.y.resize(n_total);
  frame.X.resize(n_total, 2);
  frame.Xr.resize(r_total, 2);
  frame.sd.reserve(static_cast<std::size_t>(n_total));

  std::vector<char> taken(static_cast<std::size_t>(pop.N_dt));
  int srow = 0, rrow = 0;
  for (int d = 1; d <= pop.D; ++d) {
    for (int t = 1; t <= pop.T; ++t) {
      const std::size_t base =
          (static_cast<std::size_t>(d - 1) * pop.T + (t - 1)) * pop.N_dt;
      std::fill(taken.begin(), taken.end(), 0);
      for (int pos : rng.srswor(n_dt, pop.N_dt)) taken[static_cast<std::size_t>(pos)] = 1;
      for (int j = 0; j < pop.N_dt; ++j) {
        if (taken[static_cast<std::size_t>(j)]) {
          frame.sd.push_back(d);
          frame.st.push_back(t);
          frame.sj.push_back(j + 1);
          frame.y[srow] = pop.y[base + static_cast<std::size_t>(j)];
          frame.X(srow, 0) = 1.0;
          frame.X(srow, 1) = pop.x[base + static_cast<std::size_t>(j)];
          ++srow;
        } else {
          frame.rd.push_back(d);
          frame.rt.push_back(t);
          frame.rj.push_back(j + 1);
          frame.Xr(rrow, 0) = 1.0;
          frame.Xr(rrow, 1) = pop.x[base + static_cast<std::size_t>(j)];
          ++rrow;
        }
      }
    }
  }
  frame.finalize();
  return frame;
}

PanelFrame census_frame(const Population& pop) {
  PanelFrame frame;
  frame.mode = FrameMode::UnitPopulation;
  frame.D = pop.D;
  frame.T = pop.T;
  frame.p = 2;
  const int total = pop.D * pop.T * pop.N_dt;
  frame.y.resize(total);
  frame.X.resize(total, 2);
  frame.Xr.resize(0, 2);
  int row = 0;
  for (int d = 1; d <= pop.D; ++d) {
    for (int t = 1; t <= pop.T; ++t) {
      const std::size_t base =
          (static_cast<std::size_t>(d - 1) * pop.T + (t - 1)) * pop.N_dt;
      for (int j = 0; j < pop.N_dt; ++j) {
        frame.sd.push_back(d);
        frame.st.push_back(t);
        frame.sj.push_back(j + 1);
        frame.y[row] = pop.y[base + static_cast<std::size_t>(j)];
        frame.X(row, 0) = 1.0;
        frame.X(row, 1) = pop.x[base + static_cast<std::size_t>(j)];
        ++row;
      }
    }
  }
  frame.finalize();
  return frame;
}

namespace {

constexpr int kPredictors = 5;
constexpr int kEstimators = 7;

const PredictorKind kPredictorOrder[kPredictors] = {
    PredictorKind::Hajek, PredictorKind::Mq, PredictorKind::Bmq,
    PredictorKind::Tmq, PredictorKind::Btmq};
const MseEstimator kEstimatorOrder[kEstimators] = {
    MseEstimator::Tmq11, MseEstimator::Tmq12, MseEstimator::Tmq21,
    MseEstimator::Tmq22, MseEstimator::Btmq1, MseEstimator::Btmq2,
    MseEstimator::Btmq3};

struct ReplicateResult {
  bool ok = false;
  std::string error;
  Eigen::MatrixXd true_mean;                  // D x T
  std::vector<Eigen::MatrixXd> pred;          // per predictor, D x T
  std::vector<Eigen::MatrixXd> rmse_est;      // per estimator, D x T (NaN = failed)
  Eigen::MatrixXd c_hat;                      // D x T
  int btmq3_failures = 0;
  int btmq3_warnings = 0;
};

// the bias estimate driving the pooled-model (bmq) selection: the plug-in
// expectation of the cell residual sum
double bmq_bias_estimate(const PanelFrame& frame, const Eigen::VectorXd& beta,
                         int d, int t) {
  const int n = frame.n_dt(d - 1, t - 1);
  const int N = frame.N_dt(d - 1, t - 1);
  double s = 0.0;
  for (int row : frame.sample_rows(d, t)) s += frame.y[row] - frame.X.row(row) * beta;
  return -(1.0 - static_cast<double>(n) / N) * s / static_cast<double>(n);
}

double pick_c(const SelectionInputs& in, CPhiMode mode, double c_fixed) {
  switch (mode) {
    case CPhiMode::Fixed: return c_fixed;
    case CPhiMode::Optimal: return select_c(in).c_hat;
    case CPhiMode::PaperGrid: return select_c_grid(in).c_hat;
  }
  return c_fixed;
}

ReplicateResult run_replicate(const SimDesign& design, int s) {
  ReplicateResult res;
  Rng rng(design.seed, static_cast<std::uint64_t>(s));
  try {
    const Population pop = generate_population(design, rng);
    const PanelFrame frame = draw_sample(pop, design.n_dt, rng);

    FitOptions opts;
    opts.c_psi = design.c_psi;
    opts.P_max = design.P_max;
    opts.threads = 1;
    const MqModel model = fit_model(frame, opts);
    MseCalculator calc(frame, model);

    res.true_mean = pop.true_mean;
    res.pred.assign(kPredictors, Eigen::MatrixXd::Zero(design.D, design.T));
    res.rmse_est.assign(kEstimators, Eigen::MatrixXd::Constant(design.D, design.T, kNan));
    res.c_hat = Eigen::MatrixXd::Zero(design.D, design.T);

    Eigen::VectorXd beta_theta;
    double sigma_theta = 0.0;
    for (int d = 1; d <= design.D; ++d) {
      const double theta = model.thetas[static_cast<std::size_t>(d - 1)].theta_hat;
      model.grid.interpolate(theta, beta_theta, sigma_theta);
      for (int t = 1; t <= design.T; ++t) {
        // pooled-model predictors with their own selected constant
        SelectionInputs bmq_in;
        for (int row : frame.sample_rows(d, t)) {
          bmq_in.u_hat.push_back((frame.y[row] - frame.X.row(row) * beta_theta) /
                                 sigma_theta);
        }
        bmq_in.sigma = sigma_theta;
        bmq_in.n_dt = frame.n_dt(d - 1, t - 1);
        bmq_in.N_dt = frame.N_dt(d - 1, t - 1);
        bmq_in.bias_hat = bmq_bias_estimate(frame, beta_theta, d, t);
        const double c_bmq = pick_c(bmq_in, design.c_mode, design.c_fixed);

        const MseCalculator::CellInputs cell_in = calc.selection_inputs(d, t);
        SelectionInputs btmq_in;
        btmq_in.u_hat = cell_in.u_hat;
        btmq_in.sigma = cell_in.sigma;
        btmq_in.n_dt = cell_in.n_dt;
        btmq_in.N_dt = cell_in.N_dt;
        btmq_in.bias_hat = cell_in.bias_hat;
        const double c_btmq = pick_c(btmq_in, design.c_mode, design.c_fixed);
        res.c_hat(d - 1, t - 1) = c_btmq;

        const QuantileSurface& surf = model.surface_theta(d, t);
        res.pred[0](d - 1, t - 1) = hajek(frame, d, t).value;
        res.pred[1](d - 1, t - 1) = mq_predict(frame, model.grid, model.thetas, d, t).value;
        res.pred[2](d - 1, t - 1) =
            bmq_predict(frame, model.grid, model.thetas, d, t, c_bmq).value;
        res.pred[3](d - 1, t - 1) = tmq_predict(frame, surf, model.thetas, d, t).value;
        res.pred[4](d - 1, t - 1) =
            btmq_predict(frame, surf, model.thetas, d, t, c_btmq).value;

        for (int e = 0; e < kEstimators; ++e) {
          if (kEstimatorOrder[e] == MseEstimator::Btmq3) {
            try {
              const MseReport rep = calc.compute(d, t, MseEstimator::Btmq3, c_btmq);
              res.rmse_est[static_cast<std::size_t>(e)](d - 1, t - 1) = rep.rmse;
              if (rep.stability_warning) ++res.btmq3_warnings;
            } catch (const Error&) {
              ++res.btmq3_failures;
            }
          } else {
            const MseReport rep = calc.compute(d, t, kEstimatorOrder[e], c_btmq);
            res.rmse_est[static_cast<std::size_t>(e)](d - 1, t - 1) = rep.rmse;
          }
        }
      }
    }
    res.ok = true;
  } catch (const std::exception& ex) {
    res.ok = false;
    res.error = ex.what();
  }
  return res;
}

}  // namespace

SimMetrics run_simulation(const SimDesign& design) {
  design.validate();
  std::vector<ReplicateResult> results(static_cast<std::size_t>(design.S));
  parallel_for(design.S, design.threads,
               [&](int s) { results[static_cast<std::size_t>(s)] = run_replicate(design, s); });

  int failures = 0;
  std::string first_error;
  for (const auto& r : results) {
    if (!r.ok) {
      ++failures;
      if (first_error.empty()) first_error = r.error;
    }
  }
  if (failures > 0 && static_cast<double>(failures) >= 0.01 * design.S) {
    throw numeric_error("simulation aborted: " + std::to_string(failures) + "/" +
                        std::to_string(design.S) + " replicates failed (" + first_error + ")");
  }

  const int D = design.D, T = design.T;
  SimMetrics out;
  out.S = design.S;
  out.failures = failures;

  // per-cell first-level aggregates, replicate order, compensated sums
  std::vector<Eigen::MatrixXd> bias1(kPredictors, Eigen::MatrixXd::Zero(D, T));
  std::vector<Eigen::MatrixXd> msq1(kPredictors, Eigen::MatrixXd::Zero(D, T));
  Eigen::MatrixXd ystar = Eigen::MatrixXd::Zero(D, T);
  Eigen::MatrixXd mean_c = Eigen::MatrixXd::Zero(D, T);
  int S_ok = 0;
  for (int d = 0; d < D; ++d) {
    for (int t = 0; t < T; ++t) {
      KahanSum ys, cs;
      std::vector<KahanSum> dev(kPredictors), sq(kPredictors);
      int count = 0;
      for (const auto& r : results) {
        if (!r.ok) continue;
        ++count;
        ys.add(r.true_mean(d, t));
        cs.add(r.c_hat(d, t));
        for (int k = 0; k < kPredictors; ++k) {
          const double e = r.pred[static_cast<std::size_t>(k)](d, t) - r.true_mean(d, t);
          dev[static_cast<std::size_t>(k)].add(e);
          sq[static_cast<std::size_t>(k)].add(e * e);
        }
      }
      S_ok = count;
      ystar(d, t) = ys.value() / count;
      mean_c(d, t) = cs.value() / count;
      for (int k = 0; k < kPredictors; ++k) {
        bias1[static_cast<std::size_t>(k)](d, t) = dev[static_cast<std::size_t>(k)].value() / count;
        msq1[static_cast<std::size_t>(k)](d, t) =
            std::sqrt(sq[static_cast<std::size_t>(k)].value() / count);
      }
    }
  }
  out.mean_c_hat = mean_c;

  for (int k = 0; k < kPredictors; ++k) {
    KahanSum ab, rr;
    for (int d = 0; d < D; ++d) {
      for (int t = 0; t < T; ++t) {
        ab.add(std::abs(bias1[static_cast<std::size_t>(k)](d, t) / ystar(d, t)));
        rr.add(msq1[static_cast<std::size_t>(k)](d, t) / ystar(d, t));
      }
    }
    out.predictors.push_back({kPredictorOrder[k], 100.0 * ab.value() / (D * T),
                              100.0 * rr.value() / (D * T)});
  }

  out.rmse1_tmq = msq1[3];
  out.rmse1_btmq = msq1[4];
  out.empirical_rmse_tmq = msq1[3].mean();
  out.empirical_rmse_btmq = msq1[4].mean();

  // second-level aggregates for the MSE estimators
  long btmq3_fail = 0, btmq3_warn = 0;
  for (const auto& r : results) {
    if (!r.ok) continue;
    btmq3_fail += r.btmq3_failures;
    btmq3_warn += r.btmq3_warnings;
    for (int e = 0; e < kEstimators; ++e) {
      const auto& mat = r.rmse_est[static_cast<std::size_t>(e)];
      for (int dd = 0; dd < D; ++dd) {
        for (int tt = 0; tt < T; ++tt) {
          const double v = mat(dd, tt);
          if (std::isnan(v)) {
            if (kEstimatorOrder[e] != MseEstimator::Btmq3) ++out.nonfinite_mse;
          } else if (!std::isfinite(v) || v < 0.0) {
            ++out.nonfinite_mse;
          }
        }
      }
    }
  }
  const double cell_evals = static_cast<double>(S_ok) * D * T;
  out.btmq3_failure_rate = btmq3_fail / cell_evals;
  out.btmq3_warning_rate = btmq3_warn / cell_evals;

  for (int e = 0; e < kEstimators; ++e) {
    const bool is_btmq = e >= 4;
    const std::vector<Eigen::MatrixXd>& rmse1_ref = msq1;
    const int pred_index = is_btmq ? 4 : 3;
    KahanSum ab2, rr2, pp;
    for (int d = 0; d < D; ++d) {
      for (int t = 0; t < T; ++t) {
        KahanSum dev2, sq2;
        int count = 0;
        const double target = rmse1_ref[static_cast<std::size_t>(pred_index)](d, t);
        for (const auto& r : results) {
          if (!r.ok) continue;
          const double v = r.rmse_est[static_cast<std::size_t>(e)](d, t);
          if (std::isnan(v)) continue;
          dev2.add(v - target);
          sq2.add((v - target) * (v - target));
          ++count;
        }
        const double b2 = count > 0 ? dev2.value() / count : 0.0;
        const double r2 = count > 0 ? std::sqrt(sq2.value() / count) : 0.0;
        ab2.add(std::abs(100.0 * b2 / target));
        rr2.add(100.0 * r2 / target);
        pp.add(b2 >= 0.0 ? 1.0 : 0.0);
      }
    }
    out.estimators.push_back({kEstimatorOrder[e], ab2.value() / (D * T),
                              rr2.value() / (D * T), pp.value() / (D * T)});
  }
  return out;
}

SimStudy parse_sim_design(const std::string& text) {
  SimStudy study;
  study.source_text = text;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw invalid_argument("design line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    const auto ctx = [&]() { return "design key '" + key + "'"; };
    SimDesign& d = study.design;
    try {
      if (key == "study") {
        if (value == "main") {
          study.theta_study = false;
        } else if (value == "theta") {
          study.theta_study = true;
        } else {
          throw invalid_argument("study must be main or theta");
        }
      } else if (key == "D") {
        d.D = std::stoi(value);
      } else if (key == "T") {
        d.T = std::stoi(value);
      } else if (key == "N_dt") {
        d.N_dt = std::stoi(value);
      } else if (key == "n_dt") {
        d.n_dt = std::stoi(value);
      } else if (key == "scenario") {
        d.scenario = scenario_from_name(value);
      } else if (key == "case") {
        if (value == "1.1") {
          d.time_case = TimeCase::Ar1;
          d.sigma_u = 1.0;
          d.rho = 0.2;
        } else if (value == "1.2") {
          d.time_case = TimeCase::Ar1;
          d.sigma_u = 1.0;
          d.rho = 0.8;
        } else if (value == "2") {
          d.time_case = TimeCase::Ar3;
        } else if (value == "1") {
          d.time_case = TimeCase::Ar1;
        } else {
          throw invalid_argument("case must be 1, 1.1, 1.2 or 2");
        }
      } else if (key == "sigma_u") {
        d.sigma_u = std::stod(value);
      } else if (key == "rho") {
        d.rho = std::stod(value);
      } else if (key == "S") {
        d.S = std::stoi(value);
      } else if (key == "seed") {
        d.seed = static_cast<std::uint64_t>(std::stoull(value));
      } else if (key == "c_psi") {
        d.c_psi = std::stod(value);
      } else if (key == "P_max") {
        d.P_max = std::stoi(value);
      } else if (key == "threads") {
        d.threads = std::stoi(value);
      } else if (key == "c_mode") {
        if (value == "fixed") {
          d.c_mode = CPhiMode::Fixed;
        } else if (value == "optimal") {
          d.c_mode = CPhiMode::Optimal;
        } else if (value == "grid") {
          d.c_mode = CPhiMode::PaperGrid;
        } else {
          throw invalid_argument("c_mode must be fixed, optimal or grid");
        }
      } else if (key == "c_fixed") {
        d.c_fixed = std::stod(value);
      } else if (key == "n_grid") {
        study.n_grid.clear();
        std::size_t start = 0;
        while (start <= value.size()) {
          const std::size_t comma = value.find(',', start);
          const std::string item =
              strip(value.substr(start, comma == std::string::npos ? std::string::npos
                                                                   : comma - start));
          if (!item.empty()) study.n_grid.push_back(std::stoi(item));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
        if (study.n_grid.empty()) throw invalid_argument("n_grid must not be empty");
      } else {
        throw invalid_argument("unknown design key '" + key + "'");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw invalid_argument(ctx() + ": cannot parse value '" + value + "'");
    }
  }
  study.design.validate();
  return study;
}

std::vector<ThetaConsistencyRow> theta_consistency_study(const SimDesign& design,
                                                         const std::vector<int>& n_grid,
                                                         int S) {
  design.validate();
  Rng pop_rng(design.seed, 0);
  const Population pop = generate_population(design, pop_rng);
  const PanelFrame census = census_frame(pop);

  FitOptions opts;
  opts.c_psi = design.c_psi;
  opts.threads = 1;
  const QuantileGrid pop_grid = fit_grid(census, default_quantile_grid(), opts.robust(), opts.ctrl);
  const std::vector<double> pop_q = unit_mq_coefficients(census, pop_grid);
  const std::vector<DomainTheta> theta_true = domain_thetas(census, pop_q);

  std::vector<ThetaConsistencyRow> rows;
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    const int n_dt = n_grid[gi];
    std::vector<std::vector<double>> theta_hat(
        static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(design.D)));
    parallel_for(S, design.threads, [&](int s) {
      Rng rng(design.seed, 1 + gi * static_cast<std::size_t>(S) + static_cast<std::size_t>(s));
      const PanelFrame frame = draw_sample(pop, n_dt, rng);
      const QuantileGrid grid = fit_grid(frame, default_quantile_grid(), opts.robust(), opts.ctrl);
      const std::vector<double> qhat = unit_mq_coefficients(frame, grid);
      const std::vector<DomainTheta> th = domain_thetas(frame, qhat);
      for (int d = 0; d < design.D; ++d) {
        theta_hat[static_cast<std::size_t>(s)][static_cast<std::size_t>(d)] =
            th[static_cast<std::size_t>(d)].theta_hat;
      }
    });

    ThetaConsistencyRow row;
    row.n_dt = n_dt;
    KahanSum ab, rr;
    for (int d = 0; d < design.D; ++d) {
      KahanSum dev, sq;
      for (int s = 0; s < S; ++s) {
        const double e = theta_hat[static_cast<std::size_t>(s)][static_cast<std::size_t>(d)] -
                         theta_true[static_cast<std::size_t>(d)].theta_hat;
        dev.add(e);
        sq.add(e * e);
      }
      const double truth = theta_true[static_cast<std::size_t>(d)].theta_hat;
      ab.add(std::abs(100.0 * (dev.value() / S) / truth));
      rr.add(100.0 * std::sqrt(sq.value() / S) / truth);
    }
    row.arbias = ab.value() / design.D;
    row.rrmse = rr.value() / design.D;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace twmq
