// Command line front end for the twmq shared library. Links against the C
// API only; all numerics live behind it.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "twmq/twmq.h"

namespace {

struct RunConfig {
  std::string sample;
  std::string population;
  std::string out = ".";
  std::string config_file;
  bool no_intercept = false;
  double c_psi = 1.345;
  double grid_step = 0.0;  // 0: library default
  int P_max = -1;
  double tol = 1e-6;
  int max_iter = 100;
  int threads = 1;
  // robustness parameter policy
  double c_phi = -1.0;  // >= 0: fixed value
  bool c_optimal = false;
  bool c_grid = false;
  double alpha = 0.05;
  std::uint64_t seed = 1;
};

[[noreturn]] void fail(twmq_status status) {
  const char* category = "internal";
  int exit_code = 5;
  switch (status) {
    case TWMQ_ERR_INVALID_ARGUMENT:
    case TWMQ_ERR_IO:
    case TWMQ_ERR_SCHEMA:
      category = status == TWMQ_ERR_IO ? "io"
                 : status == TWMQ_ERR_SCHEMA ? "schema"
                                             : "config";
      exit_code = 2;
      break;
    case TWMQ_ERR_NUMERIC:
      category = "numeric";
      exit_code = 3;
      break;
    case TWMQ_ERR_UNSUPPORTED:
      category = "unsupported";
      exit_code = 4;
      break;
    default:
      break;
  }
  std::fprintf(stderr, "error: category=%s message=%s\n", category, twmq_last_error());
  std::exit(exit_code);
}

void check(twmq_status status) {
  if (status != TWMQ_OK) fail(status);
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// canonical config string: hashing it stamps every artifact
std::string canonical_config(const RunConfig& cfg, const std::string& command) {
  std::ostringstream os;
  os << "command=" << command << ";sample=" << cfg.sample
     << ";population=" << cfg.population << ";no_intercept=" << cfg.no_intercept
     << ";c_psi=" << format17(cfg.c_psi) << ";grid_step=" << format17(cfg.grid_step)
     << ";P_max=" << cfg.P_max << ";tol=" << format17(cfg.tol)
     << ";max_iter=" << cfg.max_iter << ";c_phi=" << format17(cfg.c_phi)
     << ";c_optimal=" << cfg.c_optimal << ";c_grid=" << cfg.c_grid
     << ";alpha=" << format17(cfg.alpha) << ";seed=" << cfg.seed;
  return os.str();
}

std::string artifact_header(const RunConfig& cfg, const std::string& command) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a(canonical_config(cfg, command)));
  return std::string("twmq ") + twmq_version() + " config=" + buf +
         " seed=" + std::to_string(cfg.seed);
}

// name decoders for enum-coded table columns
std::string cell_text(const twmq_table* table, int row, int col) {
  const std::string name = twmq_table_col_name(table, col);
  const double v = twmq_table_value(table, row, col);
  if (name == "kind") return twmq_predictor_name(static_cast<int>(v));
  if (name == "estimator") return twmq_estimator_name(static_cast<int>(v));
  if (name == "d" || name == "t" || name == "i" || name == "j" || name == "group" ||
      name == "flagged" || name == "interval_index" || name == "iterations" ||
      name == "converged" || name == "n_dt" || name == "S" || name == "failures") {
    return std::to_string(static_cast<long long>(v));
  }
  return format17(v);
}

void write_table(const twmq_table* table, const std::string& path,
                 const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) {
    std::fprintf(stderr, "error: category=io message=cannot write %s\n", path.c_str());
    std::exit(2);
  }
  out << "# " << header_comment << "\n";
  for (int c = 0; c < twmq_table_cols(table); ++c) {
    if (c) out << ',';
    out << twmq_table_col_name(table, c);
  }
  out << '\n';
  for (int r = 0; r < twmq_table_rows(table); ++r) {
    for (int c = 0; c < twmq_table_cols(table); ++c) {
      if (c) out << ',';
      out << cell_text(table, r, c);
    }
    out << '\n';
  }
}

void apply_config_file(RunConfig& cfg) {
  if (cfg.config_file.empty()) return;
  std::ifstream in(cfg.config_file);
  if (!in) {
    std::fprintf(stderr, "error: category=config message=cannot open %s\n",
                 cfg.config_file.c_str());
    std::exit(2);
  }
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty()) continue;
    if (key == "sample") cfg.sample = value;
    else if (key == "population") cfg.population = value;
    else if (key == "out") cfg.out = value;
    else if (key == "no_intercept") cfg.no_intercept = value == "1" || value == "true";
    else if (key == "c_psi") cfg.c_psi = std::stod(value);
    else if (key == "grid_step") cfg.grid_step = std::stod(value);
    else if (key == "P_max") cfg.P_max = std::stoi(value);
    else if (key == "tol") cfg.tol = std::stod(value);
    else if (key == "max_iter") cfg.max_iter = std::stoi(value);
    else if (key == "threads") cfg.threads = std::stoi(value);
    else if (key == "c_phi") cfg.c_phi = std::stod(value);
    else if (key == "c_mode") { cfg.c_optimal = value == "optimal"; cfg.c_grid = value == "grid"; }
    else if (key == "alpha") cfg.alpha = std::stod(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else {
      std::fprintf(stderr, "error: category=config message=unknown key %s\n", key.c_str());
      std::exit(2);
    }
  }
}

struct LoadedModel {
  twmq_frame* frame = nullptr;
  twmq_model* model = nullptr;
  ~LoadedModel() {
    twmq_model_free(model);
    twmq_frame_free(frame);
  }
};

void load_and_fit(const RunConfig& cfg, LoadedModel& lm) {
  check(twmq_frame_load(cfg.sample.c_str(),
                        cfg.population.empty() ? nullptr : cfg.population.c_str(),
                        cfg.no_intercept ? 0 : 1, &lm.frame));
  twmq_fit_options opts;
  twmq_fit_options_init(&opts);
  opts.c_psi = cfg.c_psi;
  opts.grid_step = cfg.grid_step;
  opts.P_max = cfg.P_max;
  opts.tol = cfg.tol;
  opts.max_iter = cfg.max_iter;
  opts.threads = cfg.threads;
  check(twmq_model_fit(lm.frame, &opts, &lm.model));
}

twmq_c_mode c_mode(const RunConfig& cfg, double& fixed) {
  if (cfg.c_grid) return TWMQ_C_GRID;
  if (cfg.c_phi >= 0.0 && !cfg.c_optimal) {
    fixed = cfg.c_phi;
    return TWMQ_C_FIXED;
  }
  return TWMQ_C_OPTIMAL;
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
}

int cmd_fit(const RunConfig& cfg) {
  LoadedModel lm;
  load_and_fit(cfg, lm);
  ensure_out_dir(cfg);
  const std::string header = artifact_header(cfg, "fit");

  twmq_table* fit = nullptr;
  check(twmq_model_fit_table(lm.model, &fit));
  write_table(fit, cfg.out + "/fit.csv", header);
  twmq_table_free(fit);

  twmq_table* weights = nullptr;
  check(twmq_model_weight_table(lm.model, &weights));
  write_table(weights, cfg.out + "/weights.csv", header);
  twmq_table_free(weights);

  twmq_table* theta = nullptr;
  check(twmq_model_theta_table(lm.model, &theta));
  write_table(theta, cfg.out + "/theta.csv", header);
  twmq_table_free(theta);

  int D = 0, T = 0, p = 0;
  long long n = 0, N = 0;
  check(twmq_frame_dims(lm.frame, &D, &T, &p, &n, &N));
  std::printf("fitted %d domains x %d periods, p=%d, n=%lld of N=%lld\n", D, T, p, n, N);
  std::printf("artifacts: fit.csv, weights.csv, theta.csv in %s\n", cfg.out.c_str());
  return 0;
}

int cmd_predict(const RunConfig& cfg) {
  LoadedModel lm;
  load_and_fit(cfg, lm);
  ensure_out_dir(cfg);
  double fixed = 0.0;
  const twmq_c_mode mode = c_mode(cfg, fixed);

  twmq_table* pred = nullptr;
  check(twmq_model_predict(lm.model, mode, fixed, &pred));
  write_table(pred, cfg.out + "/predictions.csv", artifact_header(cfg, "predict"));

  int D = 0, T = 0, p = 0;
  long long n = 0, N = 0;
  check(twmq_frame_dims(lm.frame, &D, &T, &p, &n, &N));
  std::printf("predictions for %d cells written to %s/predictions.csv\n",
              twmq_table_rows(pred) / 5, cfg.out.c_str());
  if (n == N) std::printf("note: census frame (no non-sampled units); model predictors equal hajek\n");
  twmq_table_free(pred);
  return 0;
}

int cmd_mse(const RunConfig& cfg) {
  LoadedModel lm;
  load_and_fit(cfg, lm);
  ensure_out_dir(cfg);
  double fixed = 0.0;
  const twmq_c_mode mode = c_mode(cfg, fixed);

  double fail_rate = 0.0, warn_rate = 0.0;
  twmq_table* mse = nullptr;
  check(twmq_model_mse(lm.model, mode, fixed, &mse, &fail_rate, &warn_rate));
  write_table(mse, cfg.out + "/mse.csv", artifact_header(cfg, "mse"));
  std::printf("mse table written to %s/mse.csv\n", cfg.out.c_str());
  std::printf("btmq3 availability: failure rate %.4f, stability warning rate %.4f\n",
              fail_rate, warn_rate);
  twmq_table_free(mse);
  return 0;
}

int cmd_select_c(const RunConfig& cfg) {
  LoadedModel lm;
  load_and_fit(cfg, lm);
  ensure_out_dir(cfg);
  double fixed = 0.0;
  const twmq_c_mode mode = c_mode(cfg, fixed);
  if (mode == TWMQ_C_FIXED) {
    std::printf("fixed c_phi = %s requested; no optimization performed\n",
                format17(fixed).c_str());
  }
  twmq_table* sel = nullptr;
  check(twmq_model_select_c(lm.model, mode, fixed, &sel));
  write_table(sel, cfg.out + "/select_c.csv", artifact_header(cfg, "select-c"));
  std::printf("selected constants written to %s/select_c.csv\n", cfg.out.c_str());
  twmq_table_free(sel);
  return 0;
}

int cmd_diagnose(const RunConfig& cfg, const std::string& c_matrix_path) {
  std::vector<double> c;
  int D = 0, T = 0;
  if (!c_matrix_path.empty()) {
    // CSV with columns d,t,<value>: the last column carries the constant
    std::ifstream in(c_matrix_path);
    if (!in) {
      std::fprintf(stderr, "error: category=io message=cannot open %s\n",
                   c_matrix_path.c_str());
      return 2;
    }
    std::string line;
    bool header = true;
    std::vector<std::tuple<int, int, double>> entries;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (header) {
        header = false;
        continue;
      }
      std::stringstream ss(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(ss, field, ',')) fields.push_back(field);
      if (fields.size() < 3) continue;
      const int d = std::stoi(fields[0]);
      const int t = std::stoi(fields[1]);
      const double v = std::stod(fields[2]);
      entries.emplace_back(d, t, v);
      D = std::max(D, d);
      T = std::max(T, t);
    }
    c.assign(static_cast<std::size_t>(D) * T, 0.0);
    for (const auto& [d, t, v] : entries) c[static_cast<std::size_t>((d - 1) * T + (t - 1))] = v;
  } else {
    LoadedModel lm;
    load_and_fit(cfg, lm);
    double fixed = 0.0;
    const twmq_c_mode mode = c_mode(cfg, fixed);
    twmq_table* sel = nullptr;
    check(twmq_model_select_c(lm.model, mode, fixed, &sel));
    int p = 0;
    long long n = 0, N = 0;
    check(twmq_frame_dims(lm.frame, &D, &T, &p, &n, &N));
    c.assign(static_cast<std::size_t>(D) * T, 0.0);
    for (int r = 0; r < twmq_table_rows(sel); ++r) {
      const int d = static_cast<int>(twmq_table_value(sel, r, 0));
      const int t = static_cast<int>(twmq_table_value(sel, r, 1));
      c[static_cast<std::size_t>((d - 1) * T + (t - 1))] = twmq_table_value(sel, r, 2);
    }
    twmq_table_free(sel);
  }

  twmq_diag_result result;
  twmq_table* groups = nullptr;
  check(twmq_diagnose(c.data(), D, T, cfg.alpha, &result, &groups));
  ensure_out_dir(cfg);
  write_table(groups, cfg.out + "/diagnostics.csv", artifact_header(cfg, "diagnose"));

  std::printf("friedman (areas):   stat=%.4f p=%.6g\n", result.friedman_area_stat,
              result.friedman_area_p);
  std::printf("friedman (periods): stat=%.4f p=%.6g\n", result.friedman_period_stat,
              result.friedman_period_p);
  std::printf("tukey groups: %d (alpha=%g)\n", result.group_count, cfg.alpha);
  int flagged = 0;
  std::string flagged_list;
  for (int r = 0; r < twmq_table_rows(groups); ++r) {
    if (twmq_table_value(groups, r, 3) != 0.0) {
      ++flagged;
      if (!flagged_list.empty()) flagged_list += ",";
      flagged_list += std::to_string(static_cast<int>(twmq_table_value(groups, r, 0)));
    }
  }
  std::printf("flagged areas: %s\n", flagged == 0 ? "none" : flagged_list.c_str());
  twmq_table_free(groups);
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& design_path, bool seed_given,
                 bool threads_given) {
  std::ifstream in(design_path);
  if (!in) {
    std::fprintf(stderr, "error: category=io message=cannot open %s\n", design_path.c_str());
    return 2;
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  // explicit flags win over the design file: later lines override
  if (seed_given) text += "\nseed = " + std::to_string(cfg.seed) + "\n";
  if (threads_given) text += "\nthreads = " + std::to_string(cfg.threads) + "\n";

  twmq_sim* sim = nullptr;
  check(twmq_simulate(text.c_str(), &sim));
  ensure_out_dir(cfg);
  const std::string header = artifact_header(cfg, "simulate:" + text);

  const char* tables_main[] = {"predictors", "estimators", "mean_c", "cells", "info"};
  bool theta_study = false;
  {
    twmq_table* probe = nullptr;
    if (twmq_sim_table(sim, "theta", &probe) == TWMQ_OK) {
      theta_study = true;
      write_table(probe, cfg.out + "/theta_consistency.csv", header);
      std::printf("theta consistency study:\n  n_dt   ARBIAS%%   RRMSE%%\n");
      for (int r = 0; r < twmq_table_rows(probe); ++r) {
        std::printf("  %4d   %7.3f   %7.3f\n",
                    static_cast<int>(twmq_table_value(probe, r, 0)),
                    twmq_table_value(probe, r, 1), twmq_table_value(probe, r, 2));
      }
      twmq_table_free(probe);
    }
  }
  if (!theta_study) {
    for (const char* name : tables_main) {
      twmq_table* table = nullptr;
      check(twmq_sim_table(sim, name, &table));
      write_table(table, cfg.out + "/" + name + ".csv", header);
      if (std::strcmp(name, "predictors") == 0) {
        std::printf("predictor metrics (percent):\n  %-6s %9s %9s\n", "kind", "ARBIAS", "RRMSE");
        for (int r = 0; r < twmq_table_rows(table); ++r) {
          std::printf("  %-6s %9.3f %9.3f\n",
                      twmq_predictor_name(static_cast<int>(twmq_table_value(table, r, 0))),
                      twmq_table_value(table, r, 1), twmq_table_value(table, r, 2));
        }
      } else if (std::strcmp(name, "estimators") == 0) {
        std::printf("mse estimator metrics (percent, vs empirical RMSE):\n");
        std::printf("  %-7s %9s %9s %7s\n", "name", "ARBIAS", "RRMSE", "P+");
        for (int r = 0; r < twmq_table_rows(table); ++r) {
          std::printf("  %-7s %9.3f %9.3f %7.2f\n",
                      twmq_estimator_name(static_cast<int>(twmq_table_value(table, r, 0))),
                      twmq_table_value(table, r, 1), twmq_table_value(table, r, 2),
                      twmq_table_value(table, r, 3));
        }
      }
      twmq_table_free(table);
    }
  }
  twmq_sim_free(sim);
  std::printf("simulation artifacts written to %s\n", cfg.out.c_str());
  return 0;
}

// deterministic synthetic survey-like dataset: provinces x years with sex
// and age-band covariates, unit-level population files
int cmd_demo_data(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  std::uint64_t state = cfg.seed ^ 0x9E3779B97F4A7C15ULL;
  const auto next = [&state]() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  const auto uniform = [&]() { return static_cast<double>(next() >> 11) * 0x1.0p-53; };
  const auto normal = [&]() {
    const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };

  const int D = 23, T = 10, N_dt = 80;
  std::ofstream sample(cfg.out + "/slcs_sample.csv");
  std::ofstream pop(cfg.out + "/slcs_population.csv");
  sample << "d,t,j,y,sex,age4_2,age4_3,age4_4\n";
  pop << "d,t,j,sex,age4_2,age4_3,age4_4,sampled\n";
  std::vector<double> prov(D);
  for (auto& v : prov) v = 2.0 * normal();
  for (int d = 1; d <= D; ++d) {
    double trend = 0.0;
    for (int t = 1; t <= T; ++t) {
      trend = 0.6 * trend + 0.4 * normal();
      const int n_dt = 10 + static_cast<int>(next() % 21);  // 10..30 sampled
      for (int j = 1; j <= N_dt; ++j) {
        const int sex = next() % 2 == 0 ? 0 : 1;
        const int band = static_cast<int>(next() % 4);  // 0..3
        const double income =
            14.0 + prov[static_cast<std::size_t>(d - 1)] + trend - 1.1 * sex +
            (band == 1 ? 2.0 : band == 2 ? 3.2 : band == 3 ? -0.8 : 0.0) +
            2.2 * normal() + (uniform() < 0.02 ? 25.0 + 10.0 * normal() : 0.0);
        const bool sampled = j <= n_dt;
        const std::string xrow = std::to_string(sex) + "," +
                                 std::string(band == 1 ? "1" : "0") + "," +
                                 std::string(band == 2 ? "1" : "0") + "," +
                                 std::string(band == 3 ? "1" : "0");
        if (sampled) {
          sample << d << ',' << t << ',' << j << ',' << format17(income) << ',' << xrow
                 << '\n';
        }
        pop << d << ',' << t << ',' << j << ',' << xrow << ',' << (sampled ? 1 : 0) << '\n';
      }
    }
  }
  std::printf("synthetic dataset written to %s/slcs_sample.csv and %s/slcs_population.csv\n",
              cfg.out.c_str(), cfg.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-weighted M-quantile small area estimation"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string c_matrix_path;
  std::string design_path;

  const auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", cfg.config_file, "key=value config file (flags win)");
    if (needs_data) {
      sub->add_option("--sample", cfg.sample, "sample CSV (d,t,j,y,x1,...)");
      sub->add_option("--population", cfg.population,
                      "population CSV (unit rows or cell totals)");
      sub->add_flag("--no-intercept", cfg.no_intercept, "do not prepend a 1-column");
      sub->add_option("--c-psi", cfg.c_psi, "projective tuning constant");
      sub->add_option("--grid-step", cfg.grid_step, "quantile grid step (default 0.02)");
      sub->add_option("--P-max", cfg.P_max, "max seasonal AR order (default min(5,T-1))");
      sub->add_option("--tol", cfg.tol, "IRLS convergence tolerance");
      sub->add_option("--max-iter", cfg.max_iter, "IRLS iteration cap");
    }
    sub->add_option("--threads", cfg.threads, "worker thread cap");
    sub->add_option("--seed", cfg.seed, "seed stamped into artifacts");
    sub->add_option("--out", cfg.out, "output directory");
  };
  const auto add_cphi = [&](CLI::App* sub) {
    sub->add_option("--c-phi", cfg.c_phi, "fixed robustness parameter");
    sub->add_flag("--c-optimal", cfg.c_optimal, "per-cell exact minimizer (default)");
    sub->add_flag("--c-grid", cfg.c_grid, "0.001-step grid search on [0,10]");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit the quantile grid and weighted surfaces");
  add_common(fit, true);
  CLI::App* predict = app.add_subcommand("predict", "point predictions of cell means");
  add_common(predict, true);
  add_cphi(predict);
  CLI::App* mse = app.add_subcommand("mse", "analytical MSE estimates per cell");
  add_common(mse, true);
  add_cphi(mse);
  CLI::App* select = app.add_subcommand("select-c", "per-cell robustness parameters");
  add_common(select, true);
  add_cphi(select);
  CLI::App* diagnose = app.add_subcommand("diagnose", "outlier tests on selected constants");
  add_common(diagnose, true);
  add_cphi(diagnose);
  diagnose->add_option("--c-matrix", c_matrix_path, "precomputed d,t,c CSV (skips fitting)");
  diagnose->add_option("--alpha", cfg.alpha, "tukey level");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study from a design file");
  add_common(simulate, false);
  simulate->add_option("--design", design_path, "design key=value file")->required();
  CLI::App* demo = app.add_subcommand("demo-data", "write the bundled synthetic dataset");
  add_common(demo, false);

  CLI11_PARSE(app, argc, argv);
  apply_config_file(cfg);
  // flags override the config file: reparse so explicit flags win
  try {
    app.clear();
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (fit->parsed()) return cmd_fit(cfg);
  if (predict->parsed()) return cmd_predict(cfg);
  if (mse->parsed()) return cmd_mse(cfg);
  if (select->parsed()) return cmd_select_c(cfg);
  if (diagnose->parsed()) return cmd_diagnose(cfg, c_matrix_path);
  if (simulate->parsed()) {
    return cmd_simulate(cfg, design_path, simulate->count("--seed") > 0,
                        simulate->count("--threads") > 0);
  }
  if (demo->parsed()) return cmd_demo_data(cfg);
  return 0;
}
