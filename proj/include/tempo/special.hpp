#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

namespace tempo::special {

using no_promote = boost::math::policies::policy<boost::math::policies::promote_double<false>,
                                                 boost::math::policies::pole_error<boost::math::policies::ignore_error>,
                                                 boost::math::policies::overflow_error<boost::math::policies::ignore_error>>;

// log Gamma(x) for x > 0; +inf at the pole.
inline double ln_gamma(double x) {
  if (x <= 0.0 && x == std::floor(x)) return std::numeric_limits<double>::infinity();
  return boost::math::lgamma(x, no_promote());
}

inline double log_factorial(std::int64_t n) { return ln_gamma(static_cast<double>(n) + 1.0); }

inline double log_binomial(std::int64_t n, std::int64_t k) {
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

inline double log_beta(double a, double b) { return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b); }

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + exp(x)) without overflow
inline double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// x * log(y) with 0 * log(0) = 0
inline double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

inline constexpr double log_two_pi = 1.8378770664093454835606594728112;

}  // namespace tempo::special
