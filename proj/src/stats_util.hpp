#pragma once

#include <algorithm>
#include <span>
#include <vector>

namespace twmq {

// median by partial selection; scrambles the buffer
inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (n % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

inline double median_of(std::span<const double> v) {
  std::vector<double> tmp(v.begin(), v.end());
  return median_inplace(tmp);
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// unbiased sample variance (n-1 denominator)
inline double sample_variance(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? s / static_cast<double>(v.size() - 1) : 0.0;
}

}  // namespace twmq
