#include "diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace twmq {

namespace {

// 20-point Gauss-Legendre nodes and weights on [-1, 1] (positive half)
constexpr int kGlN = 10;
constexpr double kGlX[kGlN] = {
    0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
    0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
    0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
    0.9931285991850949};
constexpr double kGlW[kGlN] = {
    0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
    0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
    0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
    0.0176140071391521};

template <typename F>
double gauss_legendre(double lo, double hi, int panels, F&& f) {
  double total = 0.0;
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = lo + (p + 0.5) * h;
    const double half = 0.5 * h;
    double acc = 0.0;
    for (int i = 0; i < kGlN; ++i) {
      acc += kGlW[i] * (f(mid - half * kGlX[i]) + f(mid + half * kGlX[i]));
    }
    total += half * acc;
  }
  return total;
}

double norm_pdf(double z) {
  return std::exp(-0.5 * z * z) * 0.3989422804014327;
}
double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865476); }

// regularized upper incomplete gamma Q(a, x), exact in the deep tail
double gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (x < a + 1.0) {
    // lower series, complemented
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 500; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  // continued fraction, modified Lentz
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// P(range of k iid standard normals <= w)
double range_cdf(double w, int k) {
  if (w <= 0.0) return 0.0;
  const double lo = -8.5;
  const double hi = 8.5 + w;
  const int panels = 16 + static_cast<int>(w);
  const auto f = [&](double z) {
    const double d = norm_cdf(z) - norm_cdf(z - w);
    return d <= 0.0 ? 0.0 : norm_pdf(z) * std::pow(d, k - 1);
  };
  return std::min(1.0, k * gauss_legendre(lo, hi, panels, f));
}

std::vector<double> midranks(std::vector<double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t u = i; u <= j; ++u) rank[order[u]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double chi_square_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return std::max(0.0, gamma_q(0.5 * df, 0.5 * x));
}

double studentized_range_cdf(double q, int k, double df) {
  if (k < 2) throw invalid_argument("studentized range needs k >= 2");
  if (!(df > 0.0)) throw invalid_argument("studentized range needs df > 0");
  if (q <= 0.0) return 0.0;
  if (df > 1e5) return range_cdf(q, k);

  const double a = 0.5 * df;
  const double log_c = a * std::log(df) - std::lgamma(a) - (a - 1.0) * std::log(2.0);
  const double mode = df > 1.0 ? std::sqrt((df - 1.0) / df) : 0.5;
  const double spread = 1.0 / std::sqrt(2.0 * df);
  const double lo = std::max(0.0, mode - 14.0 * spread);
  const double hi = mode + 14.0 * spread + (df < 3.0 ? 8.0 : 0.0);
  const auto f = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double log_g = log_c + (df - 1.0) * std::log(s) - 0.5 * df * s * s;
    return std::exp(log_g) * range_cdf(q * s, k);
  };
  return std::min(1.0, gauss_legendre(lo, hi, 32, f));
}

double studentized_range_quantile(double p, int k, double df) {
  if (!(p > 0.0 && p < 1.0)) throw invalid_argument("quantile level must lie in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (studentized_range_cdf(hi, k, df) < p) {
    hi *= 2.0;
    if (hi > 1e4) throw numeric_error("studentized range quantile out of range");
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (studentized_range_cdf(mid, k, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-10 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

FriedmanResult friedman_test(const Eigen::MatrixXd& c, Blocking blocking) {
  // orient so rows are blocks and columns treatments
  const Eigen::MatrixXd m =
      blocking == Blocking::AreasAsTreatments ? Eigen::MatrixXd(c.transpose()) : c;
  const int blocks = static_cast<int>(m.rows());
  const int k = static_cast<int>(m.cols());
  if (blocks < 2 || k < 2) throw invalid_argument("friedman test needs at least 2x2 data");

  FriedmanResult res;
  res.treatments = k;
  res.blocks = blocks;

  std::vector<double> rank_sum(static_cast<std::size_t>(k), 0.0);
  double tie_term = 0.0;
  for (int b = 0; b < blocks; ++b) {
    std::vector<double> row(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = m(b, j);
    const std::vector<double> r = midranks(row);
    for (int j = 0; j < k; ++j) rank_sum[static_cast<std::size_t>(j)] += r[static_cast<std::size_t>(j)];
    // tie correction: sum of t^3 - t over tie groups in the block
    std::vector<double> sorted = row;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double tlen = static_cast<double>(j - i + 1);
      tie_term += tlen * tlen * tlen - tlen;
      i = j + 1;
    }
  }
  double num = 0.0;
  const double center = static_cast<double>(blocks) * (k + 1) / 2.0;
  for (int j = 0; j < k; ++j) {
    const double dev = rank_sum[static_cast<std::size_t>(j)] - center;
    num += dev * dev;
  }
  const double denom = static_cast<double>(blocks) * k * (k + 1) - tie_term / (k - 1);
  if (denom <= 0.0 || num == 0.0) {
    res.stat = 0.0;
    res.p_value = 1.0;
    return res;
  }
  res.stat = 12.0 * num / denom;
  res.p_value = chi_square_sf(res.stat, static_cast<double>(k - 1));
  return res;
}

TukeyGroups tukey_hsd(const Eigen::MatrixXd& c, double alpha) {
  const int D = static_cast<int>(c.rows());
  const int T = static_cast<int>(c.cols());
  if (D < 2) throw invalid_argument("tukey test needs at least 2 areas");
  if (T < 2) throw invalid_argument("tukey test needs at least 2 replicates per area");
  if (alpha < 0.0 || alpha > 1.0) throw invalid_argument("alpha must lie in [0,1]");

  TukeyGroups res;
  res.area_mean.resize(static_cast<std::size_t>(D));
  double ms_within = 0.0;
  for (int d = 0; d < D; ++d) {
    const double mean = c.row(d).mean();
    res.area_mean[static_cast<std::size_t>(d)] = mean;
    for (int t = 0; t < T; ++t) {
      const double dev = c(d, t) - mean;
      ms_within += dev * dev;
    }
  }
  const double df = static_cast<double>(D) * (T - 1);
  ms_within /= df;
  res.grand_mean = c.mean();

  if (alpha <= 0.0) {
    res.critical_diff = std::numeric_limits<double>::infinity();
  } else if (alpha >= 1.0) {
    res.critical_diff = 0.0;
  } else {
    const double qcrit = studentized_range_quantile(1.0 - alpha, D, df);
    res.critical_diff = qcrit * std::sqrt(ms_within / static_cast<double>(T));
  }

  // connected components of "not significantly different"
  std::vector<int> parent(static_cast<std::size_t>(D));
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (int i = 0; i < D; ++i) {
    for (int j = i + 1; j < D; ++j) {
      if (std::abs(res.area_mean[static_cast<std::size_t>(i)] -
                   res.area_mean[static_cast<std::size_t>(j)]) <= res.critical_diff) {
        parent[static_cast<std::size_t>(find(i))] = find(j);
      }
    }
  }
  std::vector<int> root_to_group(static_cast<std::size_t>(D), -1);
  res.group_of.resize(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) {
    const int r = find(d);
    if (root_to_group[static_cast<std::size_t>(r)] < 0) {
      root_to_group[static_cast<std::size_t>(r)] = res.group_count++;
    }
    res.group_of[static_cast<std::size_t>(d)] = root_to_group[static_cast<std::size_t>(r)];
  }

  std::vector<double> group_sum(static_cast<std::size_t>(res.group_count), 0.0);
  std::vector<int> group_n(static_cast<std::size_t>(res.group_count), 0);
  for (int d = 0; d < D; ++d) {
    group_sum[static_cast<std::size_t>(res.group_of[static_cast<std::size_t>(d)])] +=
        res.area_mean[static_cast<std::size_t>(d)];
    group_n[static_cast<std::size_t>(res.group_of[static_cast<std::size_t>(d)])] += 1;
  }
  // nothing stands out when the test found a single homogeneous group;
  // the tolerance keeps rounding-level differences from flagging
  if (res.group_count > 1) {
    const double tol = 1e-9 * (1.0 + std::abs(res.grand_mean));
    for (int d = 0; d < D; ++d) {
      const int g = res.group_of[static_cast<std::size_t>(d)];
      const double gmean =
          group_sum[static_cast<std::size_t>(g)] / group_n[static_cast<std::size_t>(g)];
      if (gmean > res.grand_mean + tol) res.flagged.push_back(d + 1);
    }
  }
  return res;
}

}  // namespace twmq
