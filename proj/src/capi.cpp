#include "twmq/twmq.h"

#include <algorithm>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "panel_data.hpp"
#include "pipeline.hpp"
#include "predictors.hpp"
#include "robustness_select.hpp"
#include "sim_harness.hpp"
#include "uncertainty.hpp"

namespace {

thread_local std::string g_last_error;

twmq_status status_of(const twmq::Error& err) {
  switch (err.code()) {
    case twmq::ErrorCode::InvalidArgument: return TWMQ_ERR_INVALID_ARGUMENT;
    case twmq::ErrorCode::Io: return TWMQ_ERR_IO;
    case twmq::ErrorCode::Schema: return TWMQ_ERR_SCHEMA;
    case twmq::ErrorCode::Numeric: return TWMQ_ERR_NUMERIC;
    case twmq::ErrorCode::Unsupported: return TWMQ_ERR_UNSUPPORTED;
    case twmq::ErrorCode::Internal: return TWMQ_ERR_INTERNAL;
  }
  return TWMQ_ERR_INTERNAL;
}

template <typename F>
twmq_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return TWMQ_OK;
  } catch (const twmq::Error& err) {
    g_last_error = err.what();
    return status_of(err);
  } catch (const std::exception& ex) {
    g_last_error = ex.what();
    return TWMQ_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return TWMQ_ERR_INTERNAL;
  }
}

twmq::CPhiMode c_mode_of(twmq_c_mode mode) {
  switch (mode) {
    case TWMQ_C_FIXED: return twmq::CPhiMode::Fixed;
    case TWMQ_C_OPTIMAL: return twmq::CPhiMode::Optimal;
    case TWMQ_C_GRID: return twmq::CPhiMode::PaperGrid;
  }
  throw twmq::invalid_argument("unknown c mode");
}

}  // namespace

struct twmq_frame {
  twmq::PanelFrame frame;
};

struct twmq_model {
  const twmq_frame* frame = nullptr;
  twmq::MqModel model;
};

struct twmq_table {
  std::vector<std::string> col_names;
  std::vector<std::vector<double>> rows;
};

struct twmq_sim {
  bool theta_study = false;
  twmq::SimMetrics metrics;
  std::vector<twmq::ThetaConsistencyRow> theta;
};

extern "C" {

const char* twmq_version(void) { return "0.1.0"; }

const char* twmq_last_error(void) { return g_last_error.c_str(); }

twmq_status twmq_frame_load(const char* sample_csv, const char* population_csv,
                            int add_intercept, twmq_frame** out) {
  return guarded([&] {
    if (!sample_csv || !out) throw twmq::invalid_argument("null argument");
    auto handle = std::make_unique<twmq_frame>();
    handle->frame = twmq::load_frame(sample_csv, population_csv ? population_csv : "",
                                     add_intercept != 0);
    *out = handle.release();
  });
}

void twmq_frame_free(twmq_frame* frame) { delete frame; }

twmq_status twmq_frame_dims(const twmq_frame* frame, int* D, int* T, int* p,
                            long long* n, long long* N) {
  return guarded([&] {
    if (!frame) throw twmq::invalid_argument("null frame");
    if (D) *D = frame->frame.D;
    if (T) *T = frame->frame.T;
    if (p) *p = frame->frame.p;
    if (n) *n = frame->frame.n();
    if (N) *N = frame->frame.N();
  });
}

void twmq_fit_options_init(twmq_fit_options* opts) {
  if (!opts) return;
  opts->c_psi = 1.345;
  opts->grid_step = 0.0;
  opts->P_max = -1;
  opts->tol = 1e-6;
  opts->max_iter = 100;
  opts->threads = 1;
}

twmq_status twmq_model_fit(const twmq_frame* frame, const twmq_fit_options* opts,
                           twmq_model** out) {
  return guarded([&] {
    if (!frame || !out) throw twmq::invalid_argument("null argument");
    twmq::FitOptions fo;
    if (opts) {
      if (opts->c_psi > 0.0) fo.c_psi = opts->c_psi;
      if (opts->grid_step > 0.0) {
        if (opts->grid_step >= 0.5) throw twmq::invalid_argument("grid step too coarse");
        for (double q = opts->grid_step; q < 1.0 - 0.5 * opts->grid_step;
             q += opts->grid_step) {
          fo.grid_qs.push_back(q);
        }
      }
      fo.P_max = opts->P_max;
      if (opts->tol > 0.0) fo.ctrl.tol = opts->tol;
      if (opts->max_iter > 0) fo.ctrl.max_iter = opts->max_iter;
      if (opts->threads > 0) fo.threads = opts->threads;
    }
    auto handle = std::make_unique<twmq_model>();
    handle->frame = frame;
    handle->model = twmq::fit_model(frame->frame, fo);
    *out = handle.release();
  });
}

void twmq_model_free(twmq_model* model) { delete model; }

twmq_status twmq_model_fit_table(const twmq_model* model, twmq_table** out) {
  return guarded([&] {
    if (!model || !out) throw twmq::invalid_argument("null argument");
    auto table = std::make_unique<twmq_table>();
    const int p = model->frame->frame.p;
    table->col_names = {"q", "t"};
    for (int k = 0; k < p; ++k) table->col_names.push_back("beta_" + std::to_string(k));
    table->col_names.insert(table->col_names.end(), {"sigma", "iterations", "converged"});
    const auto push = [&](const twmq::QuantileSurface& s) {
      std::vector<double> row = {s.q, static_cast<double>(s.t)};
      for (int k = 0; k < p; ++k) row.push_back(s.beta[k]);
      row.push_back(s.sigma);
      row.push_back(static_cast<double>(s.iterations));
      row.push_back(s.converged ? 1.0 : 0.0);
      table->rows.push_back(std::move(row));
    };
    for (const auto& s : model->model.grid.surfaces) push(s);
    for (const auto& period : model->model.twmq) {
      for (const auto& s : period) push(s);
    }
    *out = table.release();
  });
}

twmq_status twmq_model_weight_table(const twmq_model* model, twmq_table** out) {
  return guarded([&] {
    if (!model || !out) throw twmq::invalid_argument("null argument");
    auto table = std::make_unique<twmq_table>();
    table->col_names = {"t", "i", "w"};
    const auto& w = model->model.plan.w;
    for (int t = 1; t <= model->model.T; ++t) {
      for (int i = 1; i <= model->model.T; ++i) {
        table->rows.push_back({static_cast<double>(t), static_cast<double>(i), w(t - 1, i - 1)});
      }
    }
    *out = table.release();
  });
}

twmq_status twmq_model_theta_table(const twmq_model* model, twmq_table** out) {
  return guarded([&] {
    if (!model || !out) throw twmq::invalid_argument("null argument");
    auto table = std::make_unique<twmq_table>();
    table->col_names = {"d", "theta"};
    for (const auto& th : model->model.thetas) {
      table->rows.push_back({static_cast<double>(th.d), th.theta_hat});
    }
    *out = table.release();
  });
}

const char* twmq_predictor_name(int kind) {
  static thread_local std::string name;
  switch (kind) {
    case 0: name = "hajek"; break;
    case 1: name = "mq"; break;
    case 2: name = "bmq"; break;
    case 3: name = "tmq"; break;
    case 4: name = "btmq"; break;
    default: name = "?"; break;
  }
  return name.c_str();
}

const char* twmq_estimator_name(int est) {
  static thread_local std::string name;
  if (est >= 0 && est <= 6) {
    name = twmq::estimator_name(static_cast<twmq::MseEstimator>(est));
  } else {
    name = "?";
  }
  return name.c_str();
}

namespace {

// per-cell selected constants shared by predict / mse / select-c
struct CellSelection {
  Eigen::MatrixXd c_btmq;      // D x T
  Eigen::MatrixXd c_bmq;      // D x T
  Eigen::MatrixXd objective;  // of the btmq selection
  Eigen::MatrixXi interval;
};

CellSelection select_cells(const twmq::PanelFrame& frame, const twmq::MqModel& model,
                           twmq::MseCalculator& calc, twmq::CPhiMode mode,
                           double c_fixed) {
  CellSelection sel;
  sel.c_btmq.resize(frame.D, frame.T);
  sel.c_bmq.resize(frame.D, frame.T);
  sel.objective.resize(frame.D, frame.T);
  sel.interval.resize(frame.D, frame.T);
  Eigen::VectorXd beta;
  double sigma = 0.0;
  for (int d = 1; d <= frame.D; ++d) {
    model.grid.interpolate(model.thetas[static_cast<std::size_t>(d - 1)].theta_hat, beta,
                           sigma);
    for (int t = 1; t <= frame.T; ++t) {
      if (mode == twmq::CPhiMode::Fixed) {
        sel.c_btmq(d - 1, t - 1) = c_fixed;
        sel.c_bmq(d - 1, t - 1) = c_fixed;
        sel.objective(d - 1, t - 1) = 0.0;
        sel.interval(d - 1, t - 1) = -1;
        continue;
      }
      const auto cell_in = calc.selection_inputs(d, t);
      twmq::SelectionInputs in;
      in.u_hat = cell_in.u_hat;
      in.sigma = cell_in.sigma;
      in.n_dt = cell_in.n_dt;
      in.N_dt = cell_in.N_dt;
      in.bias_hat = cell_in.bias_hat;
      const twmq::RobustnessSelection rs =
          mode == twmq::CPhiMode::Optimal ? twmq::select_c(in) : twmq::select_c_grid(in);
      sel.c_btmq(d - 1, t - 1) = rs.c_hat;
      sel.objective(d - 1, t - 1) = rs.objective;
      sel.interval(d - 1, t - 1) = rs.interval_index;

      twmq::SelectionInputs bmq_in;
      const int n = frame.n_dt(d - 1, t - 1);
      const int N = frame.N_dt(d - 1, t - 1);
      double resid_sum = 0.0;
      for (int row : frame.sample_rows(d, t)) {
        const double e = frame.y[row] - frame.X.row(row) * beta;
        bmq_in.u_hat.push_back(e / sigma);
        resid_sum += e;
      }
      bmq_in.sigma = sigma;
      bmq_in.n_dt = n;
      bmq_in.N_dt = N;
      bmq_in.bias_hat =
          -(1.0 - static_cast<double>(n) / N) * resid_sum / static_cast<double>(n);
      sel.c_bmq(d - 1, t - 1) = (mode == twmq::CPhiMode::Optimal
                                     ? twmq::select_c(bmq_in)
                                     : twmq::select_c_grid(bmq_in))
                                    .c_hat;
    }
  }
  return sel;
}

}  // namespace

twmq_status twmq_model_predict(const twmq_model* model, twmq_c_mode mode, double c_fixed,
                               twmq_table** out) {
  return guarded([&] {
    if (!model || !out) throw twmq::invalid_argument("null argument");
    const twmq::PanelFrame& frame = model->frame->frame;
    const twmq::MqModel& m = model->model;
    twmq::MseCalculator calc(frame, m);
    const CellSelection sel = select_cells(frame, m, calc, c_mode_of(mode), c_fixed);

    auto table = std::make_unique<twmq_table>();
    table->col_names = {"d", "t", "kind", "value", "c_phi", "theta"};
    for (int d = 1; d <= frame.D; ++d) {
      for (int t = 1; t <= frame.T; ++t) {
        const auto push = [&](const twmq::DomainEstimate& est) {
          table->rows.push_back({static_cast<double>(d), static_cast<double>(t),
                                 static_cast<double>(static_cast<int>(est.kind)), est.value,
                                 est.c_phi, est.theta_used});
        };
        push(twmq::hajek(frame, d, t));
        push(twmq::mq_predict(frame, m.grid, m.thetas, d, t));
        push(twmq::bmq_predict(frame, m.grid, m.thetas, d, t, sel.c_bmq(d - 1, t - 1)));
        const twmq::QuantileSurface& surf = m.surface_theta(d, t);
        push(twmq::tmq_predict(frame, surf, m.thetas, d, t));
        push(twmq::btmq_predict(frame, surf, m.thetas, d, t, sel.c_btmq(d - 1, t - 1)));
      }
    }
    *out = table.release();
  });
}

twmq_status twmq_model_mse(const twmq_model* model, twmq_c_mode mode, double c_fixed,
                           twmq_table** out, double* btmq3_failure_rate,
                           double* btmq3_warning_rate) {
  return guarded([&] {
    if (!model || !out) throw twmq::invalid_argument("null argument");
    const twmq::PanelFrame& frame = model->frame->frame;
    const twmq::MqModel& m = model->model;
    twmq::MseCalculator calc(frame, m);
    const CellSelection sel = select_cells(frame, m, calc, c_mode_of(mode), c_fixed);

    auto table = std::make_unique<twmq_table>();
    table->col_names = {"d", "t", "estimator", "mse", "rmse", "variance_part", "bias_part"};
    long failures = 0, warnings = 0, cells = 0;
    for (int d = 1; d <= frame.D; ++d) {
      for (int t = 1; t <= frame.T; ++t) {
        ++cells;
        const double c_phi = sel.c_btmq(d - 1, t - 1);
        for (int e = 0; e < 7; ++e) {
          const auto est = static_cast<twmq::MseEstimator>(e);
          try {
            const twmq::MseReport rep = calc.compute(d, t, est, c_phi);
            table->rows.push_back({static_cast<double>(d), static_cast<double>(t),
                                   static_cast<double>(e), rep.mse, rep.rmse,
                                   rep.variance_part, rep.bias_part});
            if (est == twmq::MseEstimator::Btmq3 && rep.stability_warning) ++warnings;
          } catch (const twmq::Error&) {
            if (est == twmq::MseEstimator::Btmq3) {
              ++failures;
            } else {
              throw;
            }
          }
        }
      }
    }
    if (btmq3_failure_rate) *btmq3_failure_rate = static_cast<double>(failures) / cells;
    if (btmq3_warning_rate) *btmq3_warning_rate = static_cast<double>(warnings) / cells;
    *out = table.release();
  });
}

twmq_status twmq_model_select_c(const twmq_model* model, twmq_c_mode mode, double c_fixed,
                                twmq_table** out) {
  return guarded([&] {
    if (!model || !out) throw twmq::invalid_argument("null argument");
    const twmq::PanelFrame& frame = model->frame->frame;
    twmq::MseCalculator calc(frame, model->model);
    const CellSelection sel = select_cells(frame, model->model, calc, c_mode_of(mode), c_fixed);
    auto table = std::make_unique<twmq_table>();
    table->col_names = {"d", "t", "c_hat", "objective", "interval_index"};
    for (int d = 1; d <= frame.D; ++d) {
      for (int t = 1; t <= frame.T; ++t) {
        table->rows.push_back({static_cast<double>(d), static_cast<double>(t),
                               sel.c_btmq(d - 1, t - 1), sel.objective(d - 1, t - 1),
                               static_cast<double>(sel.interval(d - 1, t - 1))});
      }
    }
    *out = table.release();
  });
}

twmq_status twmq_diagnose(const double* c, int D, int T, double alpha,
                          twmq_diag_result* result, twmq_table** groups) {
  return guarded([&] {
    if (!c || !result) throw twmq::invalid_argument("null argument");
    Eigen::MatrixXd m(D, T);
    for (int d = 0; d < D; ++d)
      for (int t = 0; t < T; ++t) m(d, t) = c[d * T + t];
    const twmq::FriedmanResult fa = twmq::friedman_test(m, twmq::Blocking::AreasAsTreatments);
    const twmq::FriedmanResult fp = twmq::friedman_test(m, twmq::Blocking::PeriodsAsTreatments);
    const twmq::TukeyGroups tg = twmq::tukey_hsd(m, alpha);
    result->friedman_area_stat = fa.stat;
    result->friedman_area_p = fa.p_value;
    result->friedman_period_stat = fp.stat;
    result->friedman_period_p = fp.p_value;
    result->group_count = tg.group_count;
    if (groups) {
      auto table = std::make_unique<twmq_table>();
      table->col_names = {"d", "group", "mean_c", "flagged"};
      for (int d = 1; d <= D; ++d) {
        const bool flagged =
            std::find(tg.flagged.begin(), tg.flagged.end(), d) != tg.flagged.end();
        table->rows.push_back({static_cast<double>(d),
                               static_cast<double>(tg.group_of[static_cast<std::size_t>(d - 1)]),
                               tg.area_mean[static_cast<std::size_t>(d - 1)],
                               flagged ? 1.0 : 0.0});
      }
      *groups = table.release();
    }
  });
}

twmq_status twmq_simulate(const char* design_text, twmq_sim** out) {
  return guarded([&] {
    if (!design_text || !out) throw twmq::invalid_argument("null argument");
    const twmq::SimStudy study = twmq::parse_sim_design(design_text);
    auto sim = std::make_unique<twmq_sim>();
    sim->theta_study = study.theta_study;
    if (study.theta_study) {
      sim->theta = twmq::theta_consistency_study(study.design, study.n_grid, study.design.S);
    } else {
      sim->metrics = twmq::run_simulation(study.design);
    }
    *out = sim.release();
  });
}

void twmq_sim_free(twmq_sim* sim) { delete sim; }

twmq_status twmq_sim_table(const twmq_sim* sim, const char* name, twmq_table** out) {
  return guarded([&] {
    if (!sim || !name || !out) throw twmq::invalid_argument("null argument");
    const std::string which = name;
    auto table = std::make_unique<twmq_table>();
    if (sim->theta_study) {
      if (which != "theta") throw twmq::invalid_argument("theta study only has table 'theta'");
      table->col_names = {"n_dt", "arbias", "rrmse"};
      for (const auto& row : sim->theta) {
        table->rows.push_back({static_cast<double>(row.n_dt), row.arbias, row.rrmse});
      }
      *out = table.release();
      return;
    }
    const twmq::SimMetrics& m = sim->metrics;
    if (which == "predictors") {
      table->col_names = {"kind", "arbias", "rrmse"};
      for (const auto& pm : m.predictors) {
        table->rows.push_back(
            {static_cast<double>(static_cast<int>(pm.kind)), pm.arbias, pm.rrmse});
      }
    } else if (which == "estimators") {
      table->col_names = {"estimator", "arbias2", "rrmse2", "p_plus"};
      for (const auto& em : m.estimators) {
        table->rows.push_back({static_cast<double>(static_cast<int>(em.est)), em.arbias2,
                               em.rrmse2, em.p_plus});
      }
    } else if (which == "mean_c") {
      table->col_names = {"d", "t", "c"};
      for (int d = 0; d < m.mean_c_hat.rows(); ++d) {
        for (int t = 0; t < m.mean_c_hat.cols(); ++t) {
          table->rows.push_back(
              {static_cast<double>(d + 1), static_cast<double>(t + 1), m.mean_c_hat(d, t)});
        }
      }
    } else if (which == "cells") {
      table->col_names = {"d", "t", "rmse_tmq", "rmse_btmq"};
      for (int d = 0; d < m.rmse1_tmq.rows(); ++d) {
        for (int t = 0; t < m.rmse1_tmq.cols(); ++t) {
          table->rows.push_back({static_cast<double>(d + 1), static_cast<double>(t + 1),
                                 m.rmse1_tmq(d, t), m.rmse1_btmq(d, t)});
        }
      }
    } else if (which == "info") {
      table->col_names = {"S",          "failures",           "rmse_tmq",
                          "rmse_btmq",  "btmq3_failure_rate", "btmq3_warning_rate"};
      table->rows.push_back({static_cast<double>(m.S), static_cast<double>(m.failures),
                             m.empirical_rmse_tmq, m.empirical_rmse_btmq,
                             m.btmq3_failure_rate, m.btmq3_warning_rate});
    } else {
      throw twmq::invalid_argument("unknown table '" + which + "'");
    }
    *out = table.release();
  });
}

int twmq_table_rows(const twmq_table* table) {
  return table ? static_cast<int>(table->rows.size()) : 0;
}

int twmq_table_cols(const twmq_table* table) {
  return table ? static_cast<int>(table->col_names.size()) : 0;
}

const char* twmq_table_col_name(const twmq_table* table, int col) {
  if (!table || col < 0 || col >= static_cast<int>(table->col_names.size())) return "";
  return table->col_names[static_cast<std::size_t>(col)].c_str();
}

double twmq_table_value(const twmq_table* table, int row, int col) {
  if (!table || row < 0 || row >= static_cast<int>(table->rows.size()) || col < 0 ||
      col >= static_cast<int>(table->col_names.size())) {
    return 0.0;
  }
  return table->rows[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
}

void twmq_table_free(twmq_table* table) { delete table; }

}  // extern "C"
