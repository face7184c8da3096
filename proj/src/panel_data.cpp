#include "panel_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "csv.hpp"
#include "errors.hpp"

namespace twmq {

long long PanelFrame::n() const {
  long long s = 0;
  for (int d = 1; d <= D; ++d)
    for (int t = 1; t <= T; ++t) s += n_dt(d - 1, t - 1);
  return s;
}

long long PanelFrame::N() const {
  long long s = 0;
  for (int d = 1; d <= D; ++d)
    for (int t = 1; t <= T; ++t) s += N_dt(d - 1, t - 1);
  return s;
}

Eigen::VectorXd PanelFrame::sample_sum_x(int d, int t) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
  for (int r : sample_rows(d, t)) s += X.row(r).transpose();
  return s;
}

Eigen::VectorXd PanelFrame::usum_x(int d, int t) const {
  return sample_sum_x(d, t) + rsum[cell(d, t)];
}

void PanelFrame::finalize() {
  if (D <= 0 || T <= 0 || p <= 0) throw schema_error("empty frame");
  const int cells = D * T;
  n_dt = Eigen::MatrixXi::Zero(D, T);
  cell_sample.assign(cells, {});
  cell_nonsample.assign(cells, {});

  std::set<std::tuple<int, int, int>> seen;
  for (std::size_t r = 0; r < sd.size(); ++r) {
    const int d = sd[r], t = st[r];
    if (d < 1 || d > D || t < 1 || t > T) throw schema_error("unit index out of range");
    if (!seen.insert({d, t, sj[r]}).second) {
      throw schema_error("duplicate sampled unit (d=" + std::to_string(d) +
                         ",t=" + std::to_string(t) + ",j=" + std::to_string(sj[r]) + ")");
    }
    n_dt(d - 1, t - 1) += 1;
    cell_sample[cell(d, t)].push_back(static_cast<int>(r));
    if (!std::isfinite(y[static_cast<Eigen::Index>(r)])) {
      throw schema_error("missing response on sampled unit (d=" + std::to_string(d) +
                         ",t=" + std::to_string(t) + ",j=" + std::to_string(sj[r]) + ")");
    }
  }

  if (mode == FrameMode::UnitPopulation) {
    N_dt = n_dt;
    rsum.assign(cells, Eigen::VectorXd::Zero(p));
    std::set<std::tuple<int, int, int>> seen_r;
    for (std::size_t r = 0; r < rd.size(); ++r) {
      const int d = rd[r], t = rt[r];
      if (d < 1 || d > D || t < 1 || t > T) throw schema_error("unit index out of range");
      if (seen.count({d, t, rj[r]}) || !seen_r.insert({d, t, rj[r]}).second) {
        throw schema_error("duplicate population unit (d=" + std::to_string(d) +
                           ",t=" + std::to_string(t) + ",j=" + std::to_string(rj[r]) + ")");
      }
      N_dt(d - 1, t - 1) += 1;
      cell_nonsample[cell(d, t)].push_back(static_cast<int>(r));
      rsum[cell(d, t)] += Xr.row(r).transpose();
    }
  } else {
    if (N_dt.rows() != D || N_dt.cols() != T) {
      N_dt = n_dt;  // census fallback when no population info was given
    }
    if (static_cast<int>(rsum.size()) != cells) {
      rsum.assign(cells, Eigen::VectorXd::Zero(p));
    }
  }

  for (int d = 1; d <= D; ++d) {
    for (int t = 1; t <= T; ++t) {
      if (n_dt(d - 1, t - 1) > N_dt(d - 1, t - 1)) {
        throw schema_error("sample exceeds population in cell (d=" + std::to_string(d) +
                           ",t=" + std::to_string(t) + ")");
      }
    }
  }
}

RelevantSets relevant_sets(const PanelFrame& frame, int P) {
  if (P < 0 || P > frame.T) throw invalid_argument("P must lie in [0, T]");
  RelevantSets rs;
  rs.T = frame.T;
  rs.P = P;
  rs.t_lo.resize(frame.T);
  rs.n_d_of_t = Eigen::MatrixXi::Zero(frame.D, frame.T);
  rs.N_d_of_t = Eigen::MatrixXi::Zero(frame.D, frame.T);
  rs.n_of_t.assign(frame.T, 0);
  rs.N_of_t.assign(frame.T, 0);
  const int width = std::max(P, 1);
  for (int t = 1; t <= frame.T; ++t) {
    rs.t_lo[t - 1] = std::max(1, t - width + 1);
    for (int d = 1; d <= frame.D; ++d) {
      int ns = 0, Ns = 0;
      for (int i = rs.t_lo[t - 1]; i <= t; ++i) {
        ns += frame.n_dt(d - 1, i - 1);
        Ns += frame.N_dt(d - 1, i - 1);
      }
      rs.n_d_of_t(d - 1, t - 1) = ns;
      rs.N_d_of_t(d - 1, t - 1) = Ns;
      rs.n_of_t[t - 1] += ns;
      rs.N_of_t[t - 1] += Ns;
    }
  }
  return rs;
}

namespace {

struct SampleCsv {
  std::vector<int> d, t, j;
  std::vector<double> y;
  std::vector<std::vector<double>> x;
  int p = 0;
};

SampleCsv read_sample(const std::string& path) {
  const CsvTable tab = read_csv(path);
  if (tab.header.size() < 5 || tab.header[0] != "d" || tab.header[1] != "t" ||
      tab.header[2] != "j" || tab.header[3] != "y") {
    throw schema_error(path + ": expected header d,t,j,y,x1,...");
  }
  SampleCsv s;
  s.p = static_cast<int>(tab.header.size()) - 4;
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    const std::string ctx = path + ":" + std::to_string(tab.line_numbers[r]);
    s.d.push_back(parse_int(row[0], ctx));
    s.t.push_back(parse_int(row[1], ctx));
    s.j.push_back(parse_int(row[2], ctx));
    if (row[3].empty()) {
      throw schema_error(ctx + ": missing response on sampled row");
    }
    s.y.push_back(parse_double(row[3], ctx));
    std::vector<double> xv(s.p);
    for (int k = 0; k < s.p; ++k) xv[k] = parse_double(row[4 + k], ctx);
    s.x.push_back(std::move(xv));
  }
  return s;
}

}  // namespace

PanelFrame load_frame(const std::string& sample_path,
                      const std::string& population_path,
                      bool add_intercept) {
  const SampleCsv s = read_sample(sample_path);
  if (s.d.empty()) throw schema_error(sample_path + ": no sampled units");

  PanelFrame frame;
  const int off = add_intercept ? 1 : 0;
  frame.p = s.p + off;
  frame.sd = s.d;
  frame.st = s.t;
  frame.sj = s.j;
  const int n = static_cast<int>(s.d.size());
  frame.y = Eigen::Map<const Eigen::VectorXd>(s.y.data(), n);
  frame.X = Eigen::MatrixXd::Ones(n, frame.p);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < s.p; ++k) frame.X(r, off + k) = s.x[r][k];

  frame.D = *std::max_element(s.d.begin(), s.d.end());
  frame.T = *std::max_element(s.t.begin(), s.t.end());

  if (population_path.empty()) {
    frame.mode = FrameMode::TotalsOnly;
    frame.finalize();
    return frame;
  }

  const CsvTable tab = read_csv(population_path);
  const bool unit_mode = tab.header.size() >= 2 && tab.header[2] == "j";
  if (unit_mode) {
    if (tab.header.size() != static_cast<std::size_t>(s.p) + 4 ||
        tab.header[0] != "d" || tab.header[1] != "t" ||
        tab.header.back() != "sampled") {
      throw schema_error(population_path + ": expected header d,t,j,x1,...,sampled");
    }
    frame.mode = FrameMode::UnitPopulation;
    std::map<std::tuple<int, int, int>, std::size_t> sample_index;
    for (int r = 0; r < n; ++r) sample_index[{s.d[r], s.t[r], s.j[r]}] = r;
    std::set<std::tuple<int, int, int>> matched;
    std::vector<std::vector<double>> xr;
    for (std::size_t r = 0; r < tab.rows.size(); ++r) {
      const auto& row = tab.rows[r];
      const std::string ctx = population_path + ":" + std::to_string(tab.line_numbers[r]);
      const int d = parse_int(row[0], ctx);
      const int t = parse_int(row[1], ctx);
      const int j = parse_int(row[2], ctx);
      const int sampled = parse_int(row.back(), ctx);
      if (sampled != 0 && sampled != 1) throw schema_error(ctx + ": sampled must be 0 or 1");
      std::vector<double> xv(s.p);
      for (int k = 0; k < s.p; ++k) xv[k] = parse_double(row[3 + k], ctx);
      frame.D = std::max(frame.D, d);
      frame.T = std::max(frame.T, t);
      if (sampled) {
        const auto it = sample_index.find({d, t, j});
        if (it == sample_index.end()) {
          throw schema_error(ctx + ": population row flagged sampled has no sample row");
        }
        for (int k = 0; k < s.p; ++k) {
          if (xv[k] != s.x[it->second][k]) {
            throw schema_error(ctx + ": covariates disagree with the sample row");
          }
        }
        if (!matched.insert({d, t, j}).second) {
          throw schema_error(ctx + ": duplicate population unit");
        }
      } else {
        frame.rd.push_back(d);
        frame.rt.push_back(t);
        frame.rj.push_back(j);
        xr.push_back(std::move(xv));
      }
    }
    if (matched.size() != static_cast<std::size_t>(n)) {
      throw schema_error(population_path + ": some sample rows are absent from the population file");
    }
    frame.Xr = Eigen::MatrixXd::Ones(static_cast<int>(xr.size()), frame.p);
    for (std::size_t r = 0; r < xr.size(); ++r)
      for (int k = 0; k < s.p; ++k) frame.Xr(static_cast<int>(r), off + k) = xr[r][k];
    frame.finalize();
    return frame;
  }

  // totals mode: d,t,N,sx1,...,sxp
  if (tab.header.size() != static_cast<std::size_t>(s.p) + 3 ||
      tab.header[0] != "d" || tab.header[1] != "t" || tab.header[2] != "N") {
    throw schema_error(population_path + ": expected header d,t,N,sx1,...,sxp");
  }
  frame.mode = FrameMode::TotalsOnly;
  for (const auto& row : tab.rows) {
    frame.D = std::max(frame.D, parse_int(row[0], population_path));
    frame.T = std::max(frame.T, parse_int(row[1], population_path));
  }
  frame.N_dt = Eigen::MatrixXi::Zero(frame.D, frame.T);
  frame.rsum.assign(static_cast<std::size_t>(frame.D) * frame.T,
                    Eigen::VectorXd::Zero(frame.p));
  std::set<std::pair<int, int>> seen_cells;
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    const std::string ctx = population_path + ":" + std::to_string(tab.line_numbers[r]);
    const int d = parse_int(row[0], ctx);
    const int t = parse_int(row[1], ctx);
    if (!seen_cells.insert({d, t}).second) throw schema_error(ctx + ": duplicate cell");
    const int Ncell = parse_int(row[2], ctx);
    frame.N_dt(d - 1, t - 1) = Ncell;
    Eigen::VectorXd sx = Eigen::VectorXd::Zero(frame.p);
    for (int k = 0; k < s.p; ++k) sx[off + k] = parse_double(row[3 + k], ctx);
    frame.rsum[frame.cell(d, t)] = sx;
  }
  frame.finalize();
  // the intercept share of the totals is the non-sampled head count
  if (add_intercept) {
    for (int d = 1; d <= frame.D; ++d)
      for (int t = 1; t <= frame.T; ++t)
        frame.rsum[frame.cell(d, t)][0] =
            frame.N_dt(d - 1, t - 1) - frame.n_dt(d - 1, t - 1);
  }
  return frame;
}

void save_sample_csv(const PanelFrame& frame, const std::string& path,
                     bool strip_intercept) {
  CsvWriter w(path);
  const int off = strip_intercept ? 1 : 0;
  std::vector<std::string> header = {"d", "t", "j", "y"};
  for (int k = off; k < frame.p; ++k) header.push_back("x" + std::to_string(k - off + 1));
  w.row(header);
  for (std::size_t r = 0; r < frame.sd.size(); ++r) {
    std::vector<std::string> row = {std::to_string(frame.sd[r]), std::to_string(frame.st[r]),
                                    std::to_string(frame.sj[r]),
                                    format_double(frame.y[static_cast<Eigen::Index>(r)])};
    for (int k = off; k < frame.p; ++k) row.push_back(format_double(frame.X(static_cast<int>(r), k)));
    w.row(row);
  }
  w.close();
}

void save_population_csv(const PanelFrame& frame, const std::string& path,
                         bool strip_intercept) {
  if (frame.mode != FrameMode::UnitPopulation) {
    throw unsupported_error("population dump requires a unit-level frame");
  }
  CsvWriter w(path);
  const int off = strip_intercept ? 1 : 0;
  std::vector<std::string> header = {"d", "t", "j"};
  for (int k = off; k < frame.p; ++k) header.push_back("x" + std::to_string(k - off + 1));
  header.push_back("sampled");
  w.row(header);
  for (std::size_t r = 0; r < frame.sd.size(); ++r) {
    std::vector<std::string> row = {std::to_string(frame.sd[r]), std::to_string(frame.st[r]),
                                    std::to_string(frame.sj[r])};
    for (int k = off; k < frame.p; ++k) row.push_back(format_double(frame.X(static_cast<int>(r), k)));
    row.push_back("1");
    w.row(row);
  }
  for (std::size_t r = 0; r < frame.rd.size(); ++r) {
    std::vector<std::string> row = {std::to_string(frame.rd[r]), std::to_string(frame.rt[r]),
                                    std::to_string(frame.rj[r])};
    for (int k = off; k < frame.p; ++k) row.push_back(format_double(frame.Xr(static_cast<int>(r), k)));
    row.push_back("0");
    w.row(row);
  }
  w.close();
}

}  // namespace twmq
