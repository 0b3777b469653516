#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace pmtp {

inline double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779399461;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Quantile of the standard normal distribution.
double normal_quantile(double p);

inline double expit(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

// Lower weighted median: smallest value whose cumulative weight reaches half
// the total. With equal weights this is the usual lower median for even
// counts and the middle element for odd counts.
double weighted_median(std::vector<double> values, std::vector<double> weights);

}  // namespace pmtp
