#pragma once

// Thin wrappers over Boost.Math for the CDFs the estimators need.

#include <cmath>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace cause_sieve::dist {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Gamma(shape, scale) CDF at x.
inline double gamma_cdf(double x, double shape, double scale) {
  if (x <= 0) return 0.0;
  return boost::math::gamma_p(shape, x / scale);
}

/// Upper tail of Gamma(shape, scale) at x.
inline double gamma_sf(double x, double shape, double scale) {
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(shape, x / scale);
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  const boost::math::students_t_distribution<double> d(df);
  return 2.0 * boost::math::cdf(boost::math::complement(d, std::fabs(t)));
}

}  // namespace cause_sieve::dist
