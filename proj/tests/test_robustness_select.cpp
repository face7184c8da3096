#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "rng.hpp"
#include "robustness_select.hpp"

using namespace twmq;

namespace {

SelectionInputs random_instance(Rng& rng) {
  SelectionInputs in;
  in.n_dt = 2 + static_cast<int>(rng.below(29));
  in.N_dt = in.n_dt + 1 + static_cast<int>(rng.below(100));
  in.sigma = 0.3 + 2.0 * rng.uniform();
  in.bias_hat = rng.normal(0.0, 0.8);
  for (int j = 0; j < in.n_dt; ++j) {
    // heavy-tailed standardized residuals
    double u = rng.normal();
    if (rng.bernoulli(0.15)) u *= 6.0;
    in.u_hat.push_back(u);
  }
  return in;
}

double max_abs_u(const SelectionInputs& in) {
  double m = 0.0;
  for (double u : in.u_hat) m = std::max(m, std::abs(u));
  return m;
}

}  // namespace

TEST_CASE("objective boundary values") {
  SelectionInputs in;
  in.u_hat = {0.5, -1.2, 2.0};
  in.sigma = 1.5;
  in.n_dt = 3;
  in.N_dt = 10;
  in.bias_hat = 0.4;

  // c = 0: the correction vanishes
  CHECK(objective_A(0.0, in) == doctest::Approx(0.4 * 0.4));

  // constant beyond the largest |u|
  const double at_max = objective_A(2.0, in);
  CHECK(objective_A(5.0, in) == doctest::Approx(at_max));
  CHECK(objective_A(50.0, in) == doctest::Approx(at_max));
}

TEST_CASE("single positive residual without bias keeps c at zero") {
  SelectionInputs in;
  in.u_hat = {2.0};
  in.sigma = 1.0;
  in.n_dt = 1;
  in.N_dt = 2;
  in.bias_hat = 0.0;
  // closed form: A(c) = 0.5 c^2 below |u|
  CHECK(objective_A(1.0, in) == doctest::Approx(0.5));
  const RobustnessSelection sel = select_c(in);
  CHECK(sel.c_hat == 0.0);
  CHECK(sel.interval_index == -1);
}

TEST_CASE("all-zero residuals select zero by convention") {
  SelectionInputs in;
  in.u_hat = {0.0, 0.0, 0.0};
  in.sigma = 1.0;
  in.n_dt = 3;
  in.N_dt = 9;
  in.bias_hat = -0.7;
  const RobustnessSelection sel = select_c(in);
  CHECK(sel.c_hat == 0.0);
  CHECK(sel.objective == doctest::Approx(0.49));
}

TEST_CASE("exact selector matches a dense grid oracle") {
  Rng rng(2024);
  int interior = 0;
  for (int rep = 0; rep < 400; ++rep) {
    const SelectionInputs in = random_instance(rng);
    const double hi = max_abs_u(in);
    const RobustnessSelection sel = select_c(in);

    CHECK(sel.c_hat >= 0.0);
    CHECK(sel.c_hat <= hi + 1e-12);
    CHECK(sel.objective <= objective_A(0.0, in) + 1e-12);
    CHECK(sel.objective <= objective_A(std::max(hi, 1e-12), in) + 1e-12);

    // dense-grid minimization as the independent oracle
    const double step = 1e-4;
    double best_c = 0.0, best_v = objective_A(0.0, in);
    for (double c = step; c <= hi + step; c += step) {
      const double v = objective_A(std::min(c, hi), in);
      if (v < best_v) {
        best_v = v;
        best_c = std::min(c, hi);
      }
    }
    CHECK(std::abs(sel.c_hat - best_c) <= step + 1e-12);
    CHECK(sel.objective <= best_v + 1e-8 * (1.0 + std::abs(best_v)));

    // interior optima: stationarity and the sign law
    if (sel.c_hat > 1e-12 && sel.c_hat < hi - 1e-12) {
      bool at_anchor = false;
      for (double u : in.u_hat) {
        if (std::abs(std::abs(u) - sel.c_hat) < 1e-12) at_anchor = true;
      }
      if (!at_anchor) {
        ++interior;
        const double omf = 1.0 - static_cast<double>(in.n_dt) / in.N_dt;
        const double sn = in.sigma / in.n_dt;
        double sum_in = 0.0;
        int n_pos = 0, n_neg = 0;
        for (double u : in.u_hat) {
          if (std::abs(u) <= sel.c_hat) {
            sum_in += u;
          } else if (u > 0.0) {
            ++n_pos;
          } else {
            ++n_neg;
          }
        }
        const double delta = n_pos - n_neg;
        const double resid =
            (in.bias_hat + omf * sn * sum_in) * delta +
            omf * sn * (delta * delta + n_pos + n_neg) * sel.c_hat;
        CHECK(std::abs(resid) < 1e-10 * (1.0 + std::abs(in.bias_hat)));
        // sign law: more negative outliers <=> positive inner bias
        const double inner = in.bias_hat + omf * sn * sum_in;
        CHECK((n_neg - n_pos > 0) == (inner > 0.0));
      }
    }
  }
  CHECK(interior > 10);  // the law must actually have been exercised
}

TEST_CASE("near-flat optima form a single interval") {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const SelectionInputs in = random_instance(rng);
    const double hi = max_abs_u(in);
    const RobustnessSelection sel = select_c(in);
    // the near-optimal level set along a fine grid is contiguous
    const double tol = 1e-12 * (1.0 + std::abs(sel.objective));
    bool inside = false, left_gap = false;
    bool contiguous = true;
    for (double c = 0.0; c <= hi; c += hi / 2000.0 + 1e-30) {
      const bool close = objective_A(c, in) <= sel.objective + tol + 1e-9 * hi * hi;
      if (close && left_gap) contiguous = false;
      if (inside && !close) left_gap = true;
      if (close) inside = true;
    }
    CHECK(contiguous);
  }
}

TEST_CASE("paper grid search agrees with the exact selector") {
  Rng rng(99);
  for (int rep = 0; rep < 50; ++rep) {
    SelectionInputs in = random_instance(rng);
    // keep residuals inside the paper's [0, 10] search window
    for (auto& u : in.u_hat) u = std::clamp(u, -9.5, 9.5);
    const RobustnessSelection exact = select_c(in);
    const RobustnessSelection grid = select_c_grid(in, 10.0, 1e-3);
    CHECK(std::abs(exact.c_hat - grid.c_hat) <= 1e-3 + 1e-12);
    CHECK(exact.objective <= grid.objective + 1e-12);
  }
}

TEST_CASE("selection is invariant under a response rescale") {
  Rng rng(55);
  for (int rep = 0; rep < 50; ++rep) {
    const SelectionInputs in = random_instance(rng);
    SelectionInputs scaled = in;  // y -> k y: u unchanged, sigma and bias scale
    const double k = 3.7;
    scaled.sigma *= k;
    scaled.bias_hat *= k;
    const RobustnessSelection a = select_c(in);
    const RobustnessSelection b = select_c(scaled);
    CHECK(a.c_hat == doctest::Approx(b.c_hat).epsilon(1e-12));
    CHECK(b.objective == doctest::Approx(k * k * a.objective).epsilon(1e-10));
  }
}
