#pragma once

// Normal distribution truncated to [lower, upper]: interval probabilities,
// moments and inverse-CDF sampling.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "bsdesign/errors.hpp"

namespace bsdesign {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }
inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// Phi^{-1}(p) for p in (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
  if (!(p < 1.0)) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

// P(a <= Z <= b) for a standard normal Z, evaluated on whichever tail keeps
// precision.
inline double normal_interval(double a, double b) {
  if (!(b > a)) return 0.0;
  if (a >= 0.0) return normal_sf(a) - normal_sf(b);
  if (b <= 0.0) return normal_cdf(b) - normal_cdf(a);
  return 1.0 - normal_cdf(a) - normal_sf(b);
}

class TruncatedNormal {
 public:
  TruncatedNormal(double mu, double sigma, double lower = 0.0, double upper = 1.0)
      : mu_(mu), sigma_(sigma), lower_(lower), upper_(upper) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw InvalidArgument("truncated normal needs sigma > 0");
    }
    if (!(upper > lower)) throw InvalidArgument("truncated normal needs lower < upper");
    alpha_ = (lower - mu) / sigma;
    beta_ = (upper - mu) / sigma;
    z_ = normal_interval(alpha_, beta_);
    if (!(z_ > 0.0)) throw DegeneratePrior("truncation interval carries no normal mass");
  }

  double mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }

  // Probability of [lo, hi] under the truncated law.
  double probability(double lo, double hi) const {
    lo = std::max(lo, lower_);
    hi = std::min(hi, upper_);
    if (!(hi > lo)) return 0.0;
    return normal_interval((lo - mu_) / sigma_, (hi - mu_) / sigma_) / z_;
  }

  double mean() const {
    return mu_ + sigma_ * (normal_pdf(alpha_) - normal_pdf(beta_)) / z_;
  }

  // Inverse-CDF transform of u in [0,1). Works on the reflected problem when
  // the interval sits in the upper tail so the CDF differences stay accurate.
  double from_uniform(double u) const {
    double x;
    if (alpha_ >= 0.0) {
      const double sa = normal_sf(alpha_);
      const double p = sa - u * (sa - normal_sf(beta_));
      x = mu_ - sigma_ * normal_quantile(p);
    } else {
      const double ca = normal_cdf(alpha_);
      const double p = ca + u * (normal_cdf(beta_) - ca);
      x = mu_ + sigma_ * normal_quantile(p);
    }
    return std::clamp(x, lower_, upper_);
  }

 private:
  double mu_, sigma_, lower_, upper_;
  double alpha_ = 0.0, beta_ = 0.0, z_ = 1.0;
};

}  // namespace bsdesign
