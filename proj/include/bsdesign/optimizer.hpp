#pragma once

// Variance surrogate for the broken-stick coefficients under a discrete
// change-point prior, its closed-form minimizer over the visit proportions,
// and two independent checks: exact conditional covariance and an exhaustive
// simplex search.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsdesign/errors.hpp"
#include "bsdesign/linalg.hpp"
#include "bsdesign/model.hpp"

namespace bsdesign {

struct DesignWeights {
  double a0 = 0.0;
  double a1 = 0.0;
  double a2 = 1.0;

  void validate() const {
    if (!(a0 >= 0.0 && a1 >= 0.0 && a2 >= 0.0)) {
      throw InvalidArgument("design weights must be nonnegative");
    }
    if (!(a0 + a1 + a2 > 0.0)) throw InvalidArgument("design weights sum to zero");
  }

  friend bool operator==(const DesignWeights&, const DesignWeights&) = default;
};

struct ShareCoefficients {
  std::vector<double> A;  // p_k / gamma_k^2
  std::vector<double> B;  // p_k / (1 - gamma_k)^2
  std::vector<double> d;  // K + 2 shares, index 0 and K + 1 are the boundaries
};

// Proportions of the visit budget over (0, gamma_1, ..., gamma_K, 1).
struct VisitProportions {
  std::vector<double> support;
  std::vector<double> q;

  std::size_t size() const noexcept { return q.size(); }
};

// q-dependent parts of Var(beta0_hat), Var(beta1_hat), Var(beta2_hat). The
// design-independent additive constants are never included.
struct SurrogateVariances {
  double v0 = 0.0;
  double v1 = 0.0;
  double v2 = 0.0;
  static constexpr bool excludes_constants = true;

  double weighted(const DesignWeights& w) const { return w.a0 * v0 + w.a1 * v1 + w.a2 * v2; }
};

inline std::vector<double> support_of(const PriorPMF& prior) {
  std::vector<double> s;
  s.reserve(prior.size() + 2);
  s.push_back(0.0);
  s.insert(s.end(), prior.points().begin(), prior.points().end());
  s.push_back(1.0);
  return s;
}

inline ShareCoefficients compute_share_coefficients(const PriorPMF& prior,
                                                    const DesignWeights& w) {
  w.validate();
  const std::size_t K = prior.size();
  if (K == 0) throw DegeneratePrior("empty prior");
  ShareCoefficients c;
  c.A.resize(K);
  c.B.resize(K);
  c.d.assign(K + 2, 0.0);

  double sumA = 0.0;
  double sumB = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double g = prior.point(k);
    const double p = prior.mass(k);
    if (!(g >= kBoundaryGuard && g <= 1.0 - kBoundaryGuard)) {
      throw BoundarySingularity("prior point " + std::to_string(g) + " too close to a boundary");
    }
    c.A[k] = p / (g * g);
    c.B[k] = p / ((1.0 - g) * (1.0 - g));
    sumA += c.A[k];
    sumB += c.B[k];
  }
  c.d[0] = w.a0 + (w.a1 + w.a2) * sumA;
  for (std::size_t k = 0; k < K; ++k) {
    c.d[k + 1] = w.a1 * c.A[k] + w.a2 * c.A[k] * c.B[k] / prior.mass(k);
  }
  c.d[K + 1] = w.a2 * sumB;
  return c;
}

// q_k = sqrt(d_k) / sum_j sqrt(d_j).
inline std::vector<double> optimal_shares(std::span<const double> d) {
  double total = 0.0;
  std::vector<double> root(d.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (!(d[k] >= 0.0)) throw InvalidArgument("negative share coefficient");
    root[k] = std::sqrt(d[k]);
    total += root[k];
  }
  if (!(total > 0.0)) throw InvalidArgument("all share coefficients are zero");
  for (double& r : root) r /= total;
  return root;
}

inline VisitProportions optimal_proportions(const ShareCoefficients& c,
                                            std::vector<double> support) {
  if (support.size() != c.d.size()) throw InvalidArgument("support size mismatch");
  return {std::move(support), optimal_shares(c.d)};
}

inline VisitProportions optimal_proportions(const PriorPMF& prior, const DesignWeights& w) {
  return optimal_proportions(compute_share_coefficients(prior, w), support_of(prior));
}

namespace detail {

// term / (n q) with a zero coefficient contributing nothing even when q == 0.
inline double inverse_share(double coeff, double q, double n) {
  if (coeff == 0.0) return 0.0;
  if (!(q > 0.0)) return std::numeric_limits<double>::infinity();
  return coeff / (n * q);
}

inline void check_proportions(std::span<const double> q, const PriorPMF& prior) {
  if (q.size() != prior.size() + 2) {
    throw InvalidArgument("proportions must cover the support (0, gamma_1..gamma_K, 1)");
  }
}

}  // namespace detail

// Sum_k d_k / q_k scaled by sigma2 / n, i.e. a0 v0 + a1 v1 + a2 v2. Returns
// +infinity when a share with positive d_k receives no visits.
inline double surrogate_objective(std::span<const double> q, std::span<const double> d,
                                  int n = 1, double sigma2 = 1.0) {
  double total = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    total += detail::inverse_share(d[k], q[k], static_cast<double>(n));
  }
  return sigma2 * total;
}

// Components may be +infinity when a needed share is zero.
inline SurrogateVariances surrogate_variances_unchecked(std::span<const double> q,
                                                        const PriorPMF& prior, int n,
                                                        double sigma2) {
  detail::check_proportions(q, prior);
  if (n <= 0) throw InvalidArgument("visit budget must be positive");
  const std::size_t K = prior.size();
  const double nn = static_cast<double>(n);

  double sumA = 0.0;
  double sumB = 0.0;
  double v1 = 0.0;
  double v2 = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double g = prior.point(k);
    const double p = prior.mass(k);
    const double A = p / (g * g);
    const double B = p / ((1.0 - g) * (1.0 - g));
    sumA += A;
    sumB += B;
    v1 += detail::inverse_share(A, q[k + 1], nn);
    v2 += detail::inverse_share(A * B / p, q[k + 1], nn);
  }
  const double head = detail::inverse_share(sumA, q[0], nn);
  SurrogateVariances v;
  v.v0 = sigma2 * detail::inverse_share(1.0, q[0], nn);
  v.v1 = sigma2 * (head + v1);
  v.v2 = sigma2 * (head + v2 + detail::inverse_share(sumB, q[K + 1], nn));
  return v;
}

inline SurrogateVariances surrogate_variances(std::span<const double> q, const PriorPMF& prior,
                                              int n, double sigma2) {
  const auto v = surrogate_variances_unchecked(q, prior, n, sigma2);
  if (!std::isfinite(v.v0) || !std::isfinite(v.v1) || !std::isfinite(v.v2)) {
    throw ZeroProportion("a support point needed by the surrogate has zero proportion");
  }
  return v;
}

// Closed-form variances of a design with visits only at 0, gamma_1 and 1.
inline Vec3 known_cp_variances(double q0, double q1, double q2, double gamma1, int n,
                               double sigma2) {
  if (!(q0 > 0.0 && q1 > 0.0 && q2 > 0.0)) throw InvalidArgument("proportions must be positive");
  if (!(gamma1 > 0.0 && gamma1 < 1.0)) throw InvalidArgument("gamma must lie in (0,1)");
  const double nn = static_cast<double>(n);
  const double g2 = gamma1 * gamma1;
  const double h2 = (1.0 - gamma1) * (1.0 - gamma1);
  return {sigma2 / (nn * q0), sigma2 / g2 * (1.0 / (nn * q0) + 1.0 / (nn * q1)),
          sigma2 / (g2 * h2) * (h2 / (nn * q0) + 1.0 / (nn * q1) + g2 / (nn * q2))};
}

// diag(sigma2 (X^T X)^{-1}) for visit times with multiplicities.
inline Vec3 exact_variances_weighted(std::span<const double> times,
                                     std::span<const double> multiplicity, double gamma,
                                     double sigma2) {
  if (times.size() != multiplicity.size()) throw InvalidArgument("times/counts size mismatch");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0,1)");
  for (std::size_t i = 0; i < times.size(); ++i) {
    check_time(times[i]);
    if (!(multiplicity[i] >= 0.0)) throw InvalidArgument("multiplicities must be nonnegative");
  }
  const auto inv = invert3(weighted_normal_matrix(times, multiplicity, gamma));
  if (!inv) throw RankDeficient("design is rank deficient at gamma = " + std::to_string(gamma));
  return {sigma2 * (*inv)[0][0], sigma2 * (*inv)[1][1], sigma2 * (*inv)[2][2]};
}

struct TimeCount {
  double time = 0.0;
  int count = 0;
};

inline Vec3 exact_variances(std::span<const TimeCount> design, double gamma, double sigma2) {
  std::vector<double> t, w;
  for (const auto& tc : design) {
    if (tc.count <= 0) throw InvalidArgument("counts must be positive");
    t.push_back(tc.time);
    w.push_back(static_cast<double>(tc.count));
  }
  return exact_variances_weighted(t, w, gamma, sigma2);
}

// Number of points of the simplex lattice {q : q_k = i_k * step, sum = 1}
// with `dims` coordinates, as a double.
inline double simplex_grid_size(std::size_t dims, double step) {
  const double m = std::round(1.0 / step);
  const double r = static_cast<double>(dims) - 1.0;
  return std::exp(std::lgamma(m + r + 1.0) - std::lgamma(m + 1.0) - std::lgamma(r + 1.0));
}

inline constexpr double kMaxSimplexGrid = 1e8;

// Exhaustive minimization of the surrogate objective over the simplex lattice
// of resolution `step`. First minimizer in lexicographic lattice order wins.
inline VisitProportions brute_force_proportions(const PriorPMF& prior, const DesignWeights& w,
                                                double step) {
  if (!(step > 0.0 && step <= 1.0)) throw InvalidArgument("step must lie in (0,1]");
  const double m_real = 1.0 / step;
  const long long m = std::llround(m_real);
  if (std::abs(m_real - static_cast<double>(m)) > 1e-9 * m_real) {
    throw InvalidArgument("1/step must be an integer");
  }
  const auto coeffs = compute_share_coefficients(prior, w);
  const std::size_t dims = coeffs.d.size();
  if (simplex_grid_size(dims, step) > kMaxSimplexGrid) {
    throw GridTooLarge("simplex lattice exceeds " + std::to_string(kMaxSimplexGrid) + " points");
  }

  const std::vector<double>& d = coeffs.d;
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<long long> idx(dims, 0), best_idx(dims, 0);
  double best = std::numeric_limits<double>::infinity();
  bool have = false;

  // Depth-first over the first dims-1 coordinates; the last takes the rest.
  auto recurse = [&](auto&& self, std::size_t pos, long long remaining, double partial) -> void {
    if (partial > best) return;
    if (pos + 1 == dims) {
      idx[pos] = remaining;
      const double total = partial + detail::inverse_share(d[pos], remaining * inv_m, 1.0);
      if (!have || total < best) {
        best = total;
        best_idx = idx;
        have = true;
      }
      return;
    }
    for (long long i = 0; i <= remaining; ++i) {
      idx[pos] = i;
      const double term = detail::inverse_share(d[pos], i * inv_m, 1.0);
      if (std::isinf(term)) continue;
      self(self, pos + 1, remaining - i, partial + term);
    }
  };
  recurse(recurse, 0, m, 0.0);

  VisitProportions out{support_of(prior), std::vector<double>(dims)};
  for (std::size_t k = 0; k < dims; ++k) out.q[k] = static_cast<double>(best_idx[k]) * inv_m;
  return out;
}

}  // namespace bsdesign
