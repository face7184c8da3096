#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace twmq {

// A frame either carries the full unit-level population (sampled and
// non-sampled rows) or only per-cell totals of the non-sampled covariates.
// Totals are enough for the plug-in predictors; the unit-level mode is
// required by the analytical MSE estimator that sums x'Vx over non-sampled
// units.
enum class FrameMode { UnitPopulation, TotalsOnly };

// Domain-by-period panel: units indexed (d, t, j), d=1..D, t=1..T.
// Sampled units carry the response y; covariates are stored row-per-unit.
struct PanelFrame {
  FrameMode mode = FrameMode::TotalsOnly;
  int D = 0;
  int T = 0;
  int p = 0;

  // sampled units, row-aligned
  std::vector<int> sd, st, sj;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;

  // non-sampled units (UnitPopulation mode only)
  std::vector<int> rd, rt, rj;
  Eigen::MatrixXd Xr;

  Eigen::MatrixXi n_dt;  // D x T sample counts
  Eigen::MatrixXi N_dt;  // D x T population counts

  // per-cell sum of x over non-sampled units (both modes)
  std::vector<Eigen::VectorXd> rsum;

  std::vector<std::vector<int>> cell_sample;     // rows into sampled arrays
  std::vector<std::vector<int>> cell_nonsample;  // rows into Xr (unit mode)

  int cell(int d, int t) const { return (d - 1) * T + (t - 1); }
  long long n() const;
  long long N() const;

  const std::vector<int>& sample_rows(int d, int t) const {
    return cell_sample[cell(d, t)];
  }
  const std::vector<int>& nonsample_rows(int d, int t) const {
    return cell_nonsample[cell(d, t)];
  }

  // population covariate sum over U_dt = sample sum + rsum
  Eigen::VectorXd usum_x(int d, int t) const;
  Eigen::VectorXd sample_sum_x(int d, int t) const;

  // rebuilds counts, cell indexes and (in unit mode) rsums from the unit
  // arrays; validates invariants
  void finalize();
};

// Relevant period ranges: for each t the contiguous set of past periods
// whose data enter the time-weighted fit, plus the pooled sizes over them.
struct RelevantSets {
  int T = 0;
  int P = 0;
  std::vector<int> t_lo;        // first period of the range for each t (1-based)
  Eigen::MatrixXi n_d_of_t;     // D x T
  Eigen::MatrixXi N_d_of_t;     // D x T
  std::vector<long long> n_of_t;
  std::vector<long long> N_of_t;

  bool contains(int t, int i) const { return i >= t_lo[t - 1] && i <= t; }
};

// Range convention: {max(1, t-P+1), ..., t} for P >= 1 and {t} for P = 0,
// so exactly the most recent min(t, max(P,1)) periods are relevant.
RelevantSets relevant_sets(const PanelFrame& frame, int P);

// Loaders. The population path may be empty: the frame then behaves as a
// census (N_dt = n_dt, no non-sampled units). `add_intercept` prepends an
// explicit 1-column to every covariate vector (and shifts totals
// accordingly).
PanelFrame load_frame(const std::string& sample_path,
                      const std::string& population_path,
                      bool add_intercept);

// Writers matching the load schemas; used for round-trips and the bundled
// synthetic data.
void save_sample_csv(const PanelFrame& frame, const std::string& path,
                     bool strip_intercept);
void save_population_csv(const PanelFrame& frame, const std::string& path,
                         bool strip_intercept);

}  // namespace twmq
