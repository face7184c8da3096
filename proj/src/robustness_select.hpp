#pragma once

#include <vector>

namespace twmq {

struct SelectionInputs {
  std::vector<double> u_hat;  // standardized cell residuals e/sigma
  double sigma = 1.0;         // converged scale of the cell's surface
  int n_dt = 0;
  int N_dt = 0;
  double bias_hat = 0.0;  // pseudo-linear bias estimate of the cell
};

struct RobustnessSelection {
  int d = 0;
  int t = 0;
  double c_hat = 0.0;
  double objective = 0.0;
  // segment of the ordered-|u| partition holding the optimum; -1 at c = 0
  int interval_index = -1;
  int mse_variant = 2;
};

// The c-dependent part of the estimated MSE of the bias-corrected
// predictor: (1-f)^2 (sigma/n)^2 sum phi^2(u;c)
//            + (B + (1-f)(sigma/n) sum phi(u;c))^2.
// The unit-variance and coefficient-variance terms do not move the argmin
// and are left out.
double objective_A(double c_phi, const SelectionInputs& in);

// Exact minimizer over c >= 0. The objective is piecewise quadratic
// between consecutive ordered |u| values and constant beyond the largest,
// so the global minimum is found by checking every interval's interior
// stationary point and all the anchors. Ties break toward the smaller c.
RobustnessSelection select_c(const SelectionInputs& in);

// Grid search over [0, c_max] with the given step; replication aid and
// oracle cross-check for the exact selector.
RobustnessSelection select_c_grid(const SelectionInputs& in, double c_max = 10.0,
                                  double step = 1e-3);

}  // namespace twmq
