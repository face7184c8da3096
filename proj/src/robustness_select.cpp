#include "robustness_select.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "robust_kernel.hpp"

namespace twmq {

namespace {

void validate(const SelectionInputs& in) {
  if (in.n_dt < 1 || static_cast<int>(in.u_hat.size()) != in.n_dt) {
    throw invalid_argument("selection inputs need n_dt >= 1 residuals");
  }
  if (!(in.sigma > 0.0)) throw invalid_argument("selection inputs need sigma > 0");
  if (in.N_dt < in.n_dt) throw invalid_argument("N_dt must be at least n_dt");
}

struct Coefs {
  double omf;  // 1 - n/N
  double sn;   // sigma / n
};

Coefs coefs(const SelectionInputs& in) {
  return {1.0 - static_cast<double>(in.n_dt) / static_cast<double>(in.N_dt),
          in.sigma / static_cast<double>(in.n_dt)};
}

// index of the interval [a_l, a_{l+1}) containing c, given the anchor list
int interval_of(double c, const std::vector<double>& anchors) {
  if (c <= 0.0) return -1;
  int l = 0;
  while (l + 1 < static_cast<int>(anchors.size()) &&
         c >= anchors[static_cast<std::size_t>(l + 1)]) {
    ++l;
  }
  return l;
}

}  // namespace

double objective_A(double c_phi, const SelectionInputs& in) {
  validate(in);
  if (c_phi < 0.0) throw invalid_argument("c_phi must be nonnegative");
  const Coefs k = coefs(in);
  double sum_phi = 0.0, sum_phi2 = 0.0;
  for (double u : in.u_hat) {
    const double ph = c_phi > 0.0 ? huber_psi(u, c_phi) : 0.0;
    sum_phi += ph;
    sum_phi2 += ph * ph;
  }
  const double bias = in.bias_hat + k.omf * k.sn * sum_phi;
  return k.omf * k.omf * k.sn * k.sn * sum_phi2 + bias * bias;
}

RobustnessSelection select_c(const SelectionInputs& in) {
  validate(in);
  const Coefs k = coefs(in);

  // anchors: 0 plus the distinct positive |u| values, ascending
  std::vector<double> anchors{0.0};
  {
    std::vector<double> mags;
    for (double u : in.u_hat) {
      if (std::abs(u) > 0.0) mags.push_back(std::abs(u));
    }
    std::sort(mags.begin(), mags.end());
    mags.erase(std::unique(mags.begin(), mags.end()), mags.end());
    anchors.insert(anchors.end(), mags.begin(), mags.end());
  }

  RobustnessSelection sel;
  sel.c_hat = 0.0;
  sel.objective = objective_A(0.0, in);
  sel.interval_index = -1;
  if (anchors.size() == 1) return sel;  // every residual is zero: A constant

  const auto consider = [&](double c) {
    const double val = objective_A(c, in);
    if (val < sel.objective - 1e-15 * (1.0 + std::abs(sel.objective)) ||
        (val <= sel.objective + 1e-15 * (1.0 + std::abs(sel.objective)) && c < sel.c_hat)) {
      sel.c_hat = c;
      sel.objective = val;
      sel.interval_index = interval_of(c, anchors);
    }
  };

  for (std::size_t l = 0; l + 1 < anchors.size(); ++l) {
    const double lo = anchors[l];
    const double hi = anchors[l + 1];
    // clipped counts over the interval's interior: units above the lower
    // anchor, split by residual sign
    double sum_in = 0.0;
    int n_pos = 0, n_neg = 0;
    for (double u : in.u_hat) {
      if (std::abs(u) <= lo) {
        sum_in += u;
      } else if (u > 0.0) {
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    const int n_clip = n_pos + n_neg;
    const double delta = static_cast<double>(n_pos - n_neg);
    // stationary point of the quadratic piece
    const double denom = k.omf * k.sn * (delta * delta + static_cast<double>(n_clip));
    if (denom > 0.0) {
      const double c_star =
          (in.bias_hat + k.omf * k.sn * sum_in) * (-delta) / denom;
      if (c_star > lo && c_star < hi) consider(c_star);
    }
    consider(hi);
  }
  return sel;
}

RobustnessSelection select_c_grid(const SelectionInputs& in, double c_max, double step) {
  validate(in);
  if (!(step > 0.0) || !(c_max >= 0.0)) throw invalid_argument("bad grid parameters");
  RobustnessSelection sel;
  sel.c_hat = 0.0;
  sel.objective = objective_A(0.0, in);
  sel.interval_index = -1;
  const long steps = static_cast<long>(std::floor(c_max / step + 0.5));
  for (long i = 1; i <= steps; ++i) {
    const double c = static_cast<double>(i) * step;
    const double val = objective_A(c, in);
    if (val < sel.objective) {
      sel.c_hat = c;
      sel.objective = val;
    }
  }
  sel.interval_index = sel.c_hat == 0.0 ? -1 : 0;
  return sel;
}

}  // namespace twmq
