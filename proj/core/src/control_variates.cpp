#include "mars/control_variates.hpp"

#include <stdexcept>

namespace mars {

double estimate_optimal_gamma(std::span<const GammaSample> samples) {
  if (samples.size() < 2) throw std::invalid_argument("estimate_optimal_gamma: need >= 2 samples");
  const std::size_t d = samples.front().y.size();
  const double n = static_cast<double>(samples.size());

  Vector mean_y(d);
  double uy = 0.0;
  double yy = 0.0;
  for (const auto& s : samples) {
    if (s.u.size() != d || s.y.size() != d)
      throw std::invalid_argument("estimate_optimal_gamma: inconsistent sample sizes");
    mean_y += s.y;
    uy += dot(s.u, s.y);
    yy += dot(s.y, s.y);
  }
  mean_y *= 1.0 / n;
  uy /= n;
  yy /= n;
  if (yy == 0.0) throw std::domain_error("degenerate correction variable");

  double var_y = 0.0;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < d; ++i) {
      const double c = s.y[i] - mean_y[i];
      var_y += c * c;
    }
  }
  var_y /= n;
  return 1.0 - (uy + var_y) / yy;
}

}  // namespace mars
