#include "pmtp/mathutil.hpp"

#include <boost/math/distributions/normal.hpp>
#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pmtp {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  static const boost::math::normal_distribution<double> dist;
  return boost::math::quantile(dist, p);
}

double weighted_median(std::vector<double> values, std::vector<double> weights) {
  if (values.empty()) throw std::invalid_argument("weighted_median: empty input");
  if (values.size() != weights.size())
    throw std::invalid_argument("weighted_median: size mismatch");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("weighted_median: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("weighted_median: zero total weight");
  double cum = 0.0;
  for (std::size_t k : order) {
    cum += weights[k];
    if (cum >= 0.5 * total) return values[k];
  }
  return values[order.back()];
}

}  // namespace pmtp
