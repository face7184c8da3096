#pragma once

#include <Eigen/Dense>
#include <vector>

namespace twmq {

enum class Blocking { AreasAsTreatments, PeriodsAsTreatments };

struct FriedmanResult {
  double stat = 0.0;
  double p_value = 1.0;
  int treatments = 0;
  int blocks = 0;
};

// Friedman rank test on the D x T matrix of selected robustness
// parameters. Areas as treatments ranks within each period; periods as
// treatments ranks within each area. Midranks on ties; chi-square(k-1)
// reference with the usual tie correction. A constant matrix degenerates
// to stat 0, p 1.
FriedmanResult friedman_test(const Eigen::MatrixXd& c, Blocking blocking);

struct TukeyGroups {
  std::vector<int> group_of;      // per area, 0-based component id
  std::vector<double> area_mean;  // per area
  double grand_mean = 0.0;
  double critical_diff = 0.0;
  std::vector<int> flagged;  // 1-based areas in groups above the grand mean
  int group_count = 0;
};

// Tukey HSD over area means with the periods as replicates. Groups are the
// connected components of "not significantly different"; flagged areas
// belong to groups whose mean exceeds the grand mean.
TukeyGroups tukey_hsd(const Eigen::MatrixXd& c, double alpha);

// Special functions backing the tests; exposed for validation against
// published tables.
double chi_square_sf(double x, double df);
double studentized_range_cdf(double q, int k, double df);
double studentized_range_quantile(double p, int k, double df);

}  // namespace twmq
