/*
 * twmq — time-weighted M-quantile small area estimation.
 *
 * C interface of the shared library: opaque handles, integer status codes,
 * thread-local error messages. All tables are dense numeric matrices with
 * named columns; enum-valued columns carry small integer codes decoded via
 * twmq_predictor_name / twmq_estimator_name.
 */
#ifndef TWMQ_H
#define TWMQ_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum twmq_status {
  TWMQ_OK = 0,
  TWMQ_ERR_INVALID_ARGUMENT = 1,
  TWMQ_ERR_IO = 2,
  TWMQ_ERR_SCHEMA = 3,
  TWMQ_ERR_NUMERIC = 4,
  TWMQ_ERR_UNSUPPORTED = 5,
  TWMQ_ERR_INTERNAL = 6
} twmq_status;

const char* twmq_version(void);

/* Message of the most recent failure on this thread; empty when the last
 * call succeeded. */
const char* twmq_last_error(void);

typedef struct twmq_frame twmq_frame;
typedef struct twmq_model twmq_model;
typedef struct twmq_table twmq_table;
typedef struct twmq_sim twmq_sim;

/* -------- panel frames -------- */

/* sample_csv: header d,t,j,y,x1,...,xp
 * population_csv (optional, may be NULL): unit rows d,t,j,x1,...,xp,sampled
 * or cell totals d,t,N,sx1,...,sxp. Without population data the frame is
 * treated as a census. add_intercept prepends an explicit 1-column. */
twmq_status twmq_frame_load(const char* sample_csv, const char* population_csv,
                            int add_intercept, twmq_frame** out);
void twmq_frame_free(twmq_frame* frame);
twmq_status twmq_frame_dims(const twmq_frame* frame, int* D, int* T, int* p,
                            long long* n, long long* N);

/* -------- model fitting -------- */

typedef struct twmq_fit_options {
  double c_psi;      /* <= 0 selects the default 1.345 */
  double grid_step;  /* <= 0 selects the default grid 0.02..0.98 step 0.02 */
  int P_max;         /* < 0 selects min(5, T-1) */
  double tol;        /* <= 0 selects 1e-6 */
  int max_iter;      /* <= 0 selects 100 */
  int threads;       /* <= 0 selects 1 */
} twmq_fit_options;

void twmq_fit_options_init(twmq_fit_options* opts);

/* Fits the pooled quantile grid, unit coefficients, domain means, the
 * seasonal AR of the cell residuals, the weight plan and the per-period
 * time-weighted surfaces. The frame must outlive the model. */
twmq_status twmq_model_fit(const twmq_frame* frame, const twmq_fit_options* opts,
                           twmq_model** out);
void twmq_model_free(twmq_model* model);

/* columns: q,t,beta_0..beta_{p-1},sigma,iterations,converged (pooled rows
 * have t = 0) */
twmq_status twmq_model_fit_table(const twmq_model* model, twmq_table** out);
/* columns: t,i,w */
twmq_status twmq_model_weight_table(const twmq_model* model, twmq_table** out);
/* columns: d,theta */
twmq_status twmq_model_theta_table(const twmq_model* model, twmq_table** out);

/* -------- predictors, mse, robustness selection -------- */

typedef enum twmq_c_mode {
  TWMQ_C_FIXED = 0,
  TWMQ_C_OPTIMAL = 1, /* exact per-cell minimizer */
  TWMQ_C_GRID = 2     /* 0.001-step grid search on [0, 10] */
} twmq_c_mode;

/* columns: d,t,kind,value,c_phi,theta */
twmq_status twmq_model_predict(const twmq_model* model, twmq_c_mode mode,
                               double c_fixed, twmq_table** out);
const char* twmq_predictor_name(int kind);

/* columns: d,t,estimator,mse,rmse,variance_part,bias_part. Cells where the
 * closed-form estimator is unavailable are skipped; rates are reported
 * through the out parameters. */
twmq_status twmq_model_mse(const twmq_model* model, twmq_c_mode mode, double c_fixed,
                           twmq_table** out, double* btmq3_failure_rate,
                           double* btmq3_warning_rate);
const char* twmq_estimator_name(int est);

/* columns: d,t,c_hat,objective,interval_index */
twmq_status twmq_model_select_c(const twmq_model* model, twmq_c_mode mode,
                                double c_fixed, twmq_table** out);

/* -------- outlier diagnostics -------- */

typedef struct twmq_diag_result {
  double friedman_area_stat;
  double friedman_area_p;
  double friedman_period_stat;
  double friedman_period_p;
  int group_count;
} twmq_diag_result;

/* c: row-major D x T matrix of selected robustness parameters.
 * groups table columns: d,group,mean_c,flagged */
twmq_status twmq_diagnose(const double* c, int D, int T, double alpha,
                          twmq_diag_result* result, twmq_table** groups);

/* -------- simulation harness -------- */

/* design_text: "key = value" lines. Keys: study (main|theta), D, T, N_dt,
 * n_dt, scenario (0,0|e,0|e,u), case (1.1|1.2|2), sigma_u, rho, S, seed,
 * c_psi, P_max, threads, c_mode (fixed|optimal|grid), c_fixed,
 * n_grid (comma list, theta study only). '#' starts a comment. */
twmq_status twmq_simulate(const char* design_text, twmq_sim** out);
void twmq_sim_free(twmq_sim* sim);

/* Table names for the main study: predictors (kind,arbias,rrmse),
 * estimators (estimator,arbias2,rrmse2,p_plus), mean_c (d,t,c),
 * cells (d,t,rmse_tmq,rmse_btmq), info (S,failures,rmse_tmq,rmse_btmq,
 * btmq3_failure_rate,btmq3_warning_rate). Theta study: theta
 * (n_dt,arbias,rrmse). */
twmq_status twmq_sim_table(const twmq_sim* sim, const char* name, twmq_table** out);

/* -------- tables -------- */

int twmq_table_rows(const twmq_table* table);
int twmq_table_cols(const twmq_table* table);
const char* twmq_table_col_name(const twmq_table* table, int col);
double twmq_table_value(const twmq_table* table, int row, int col);
void twmq_table_free(twmq_table* table);

#ifdef __cplusplus
}
#endif

#endif /* TWMQ_H */
