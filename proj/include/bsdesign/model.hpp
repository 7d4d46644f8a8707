#pragma once

// Broken-stick model: mean function, conditional design matrix, and
// least-squares estimation conditional on (or profiled over) the change-point.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsdesign/errors.hpp"
#include "bsdesign/linalg.hpp"

namespace bsdesign {

// Change-point support is kept this far away from 0 and 1 so that
// p/gamma^2 and p/(1-gamma)^2 stay finite.
inline constexpr double kBoundaryGuard = 1e-6;

inline void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw InvalidArgument("time point " + std::to_string(t) + " outside [0,1]");
  }
}

struct BrokenStickParams {
  double beta0 = 0.0;
  double beta1 = -2.0;
  double beta2 = -4.0;
  double gamma = 0.5;
  double sigma2 = 0.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) {
      throw InvalidArgument("change-point must lie in (0,1)");
    }
    if (!(sigma2 >= 0.0)) throw InvalidArgument("sigma2 must be nonnegative");
  }
};

// (x - gamma) for x >= gamma, else 0. At x == gamma both readings give 0.
inline double hinge(double x, double gamma) { return x >= gamma ? x - gamma : 0.0; }

inline double broken_stick_mean(const BrokenStickParams& p, double t) {
  return p.beta0 + p.beta1 * t + p.beta2 * hinge(t, p.gamma);
}

// Discrete prior over change-point locations. Points strictly increasing and
// inside [kBoundaryGuard, 1 - kBoundaryGuard]; zero masses are dropped and the
// remainder renormalized to sum to one.
class PriorPMF {
 public:
  PriorPMF() = default;

  PriorPMF(std::vector<double> points, std::vector<double> masses) {
    if (points.size() != masses.size()) {
      throw InvalidArgument("prior points and masses differ in length");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      if (!(masses[k] >= 0.0) || !std::isfinite(masses[k])) {
        throw InvalidArgument("prior masses must be finite and nonnegative");
      }
      if (k > 0 && !(points[k] > points[k - 1])) {
        throw InvalidArgument("prior points must be strictly increasing");
      }
      if (!(points[k] >= kBoundaryGuard && points[k] <= 1.0 - kBoundaryGuard)) {
        throw BoundarySingularity("prior point " + std::to_string(points[k]) +
                                  " violates the boundary guard");
      }
      if (masses[k] > 0.0) {
        points_.push_back(points[k]);
        masses_.push_back(masses[k]);
        total += masses[k];
      }
    }
    if (points_.empty()) throw DegeneratePrior("prior has no positive mass");
    for (double& m : masses_) m /= total;
  }

  static PriorPMF point_mass(double gamma) { return PriorPMF({gamma}, {1.0}); }

  std::size_t size() const noexcept { return points_.size(); }
  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> masses() const noexcept { return masses_; }
  double point(std::size_t k) const { return points_.at(k); }
  double mass(std::size_t k) const { return masses_.at(k); }

  // gamma -> 1 - gamma with masses carried along; support order reversed.
  PriorPMF mirrored() const {
    std::vector<double> pts(points_.rbegin(), points_.rend());
    std::vector<double> ms(masses_.rbegin(), masses_.rend());
    for (double& g : pts) g = 1.0 - g;
    return PriorPMF(std::move(pts), std::move(ms));
  }

  friend bool operator==(const PriorPMF&, const PriorPMF&) = default;

 private:
  std::vector<double> points_;
  std::vector<double> masses_;
};

struct Subject {
  std::string id;
  std::vector<double> times;
  std::vector<double> responses;

  std::size_t size() const noexcept { return times.size(); }

  // Orders visits by time, keeping each response with its visit.
  void sort_by_time() {
    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
    std::vector<double> t(order.size()), y(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      t[i] = times[order[i]];
      y[i] = responses[order[i]];
    }
    times = std::move(t);
    responses = std::move(y);
  }
};

struct LongitudinalDataset {
  std::vector<Subject> subjects;

  std::size_t total_visits() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.size();
    return n;
  }

  // All subjects concatenated into one series for a single fixed-effects fit.
  Subject pooled() const {
    Subject all;
    all.id = "pooled";
    all.times.reserve(total_visits());
    all.responses.reserve(total_visits());
    for (const auto& s : subjects) {
      all.times.insert(all.times.end(), s.times.begin(), s.times.end());
      all.responses.insert(all.responses.end(), s.responses.begin(), s.responses.end());
    }
    return all;
  }
};

struct DesignMatrix {
  std::vector<Vec3> rows;

  std::size_t size() const noexcept { return rows.size(); }
};

inline DesignMatrix build_design_matrix(std::span<const double> times, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0,1)");
  DesignMatrix x;
  x.rows.reserve(times.size());
  for (double t : times) x.rows.push_back({1.0, t, hinge(t, gamma)});
  return x;
}

// X^T W X for visit times with (possibly fractional) multiplicities.
inline Mat3 weighted_normal_matrix(std::span<const double> times,
                                   std::span<const double> weights, double gamma) {
  Mat3 m{};
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Vec3 r{1.0, times[i], hinge(times[i], gamma)};
    const double w = weights.empty() ? 1.0 : weights[i];
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) m[a][b] += w * r[a] * r[b];
    }
  }
  return m;
}

struct OlsFit {
  Vec3 beta{};
  double sigma2 = 0.0;
  double rss = 0.0;
};

inline OlsFit ols_fit(std::span<const double> times, std::span<const double> responses,
                      double gamma) {
  if (times.size() != responses.size()) {
    throw InvalidArgument("times and responses differ in length");
  }
  if (times.size() < 4) throw InvalidArgument("at least 4 visits are required for fitting");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0,1)");

  Mat3 xtx{};
  Vec3 xty{};
  bool after = false;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const Vec3 r{1.0, times[i], hinge(times[i], gamma)};
    after = after || r[2] != 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      xty[a] += r[a] * responses[i];
      for (std::size_t b = a; b < 3; ++b) xtx[a][b] += r[a] * r[b];
    }
  }
  if (!after) throw RankDeficient("no visit strictly after the change-point");
  xtx[1][0] = xtx[0][1];
  xtx[2][0] = xtx[0][2];
  xtx[2][1] = xtx[1][2];

  const auto inv = invert3(xtx);
  if (!inv) throw RankDeficient("conditional design matrix is rank deficient");

  OlsFit fit;
  fit.beta = multiply(*inv, xty);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double e = responses[i] - fit.beta[0] - fit.beta[1] * times[i] -
                     fit.beta[2] * hinge(times[i], gamma);
    fit.rss += e * e;
  }
  fit.sigma2 = fit.rss / static_cast<double>(times.size() - 3);
  return fit;
}

inline OlsFit ols_fit(const Subject& s, double gamma) {
  return ols_fit(s.times, s.responses, gamma);
}

struct BrokenStickFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double gamma = 0.0;
  double sigma2 = 0.0;
  double rss = 0.0;
};

// Equispaced interior grid k/(size+1), k = 1..size.
inline std::vector<double> interior_grid(std::size_t size) {
  if (size == 0) throw InvalidArgument("gamma grid size must be positive");
  std::vector<double> g(size);
  for (std::size_t k = 0; k < size; ++k) {
    g[k] = static_cast<double>(k + 1) / static_cast<double>(size + 1);
  }
  return g;
}

// Minimum-RSS fit over the candidate change-points. Rank-deficient candidates
// are skipped; RSS ties (relative 1e-12) go to the smaller gamma.
inline BrokenStickFit profile_fit(std::span<const double> times,
                                  std::span<const double> responses,
                                  std::span<const double> gamma_grid) {
  if (gamma_grid.empty()) throw InvalidArgument("gamma grid is empty");
  double yy = 0.0;
  for (double y : responses) yy += y * y;
  const double tie = 1e-12 * std::max(1.0, yy);

  bool found = false;
  double best_gamma = 0.0;
  OlsFit best;
  for (double g : gamma_grid) {
    OlsFit f;
    try {
      f = ols_fit(times, responses, g);
    } catch (const RankDeficient&) {
      continue;
    }
    const bool better = !found || f.rss < best.rss - tie ||
                        (std::abs(f.rss - best.rss) <= tie && g < best_gamma);
    if (better) {
      best = f;
      best_gamma = g;
      found = true;
    }
  }
  if (!found) throw NoFeasibleGamma("every candidate change-point is rank deficient");
  return {best.beta[0], best.beta[1], best.beta[2], best_gamma, best.sigma2, best.rss};
}

inline BrokenStickFit profile_fit(const Subject& s, std::span<const double> gamma_grid) {
  return profile_fit(s.times, s.responses, gamma_grid);
}

}  // namespace bsdesign
