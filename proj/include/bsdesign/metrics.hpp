#pragma once

// Indirect design comparison for observed longitudinal data: KS distance of
// each subject's visit pattern to the equally spaced design (Q1) and to the
// variance-optimal design built from the group's own fitted change-points
// (Q2), plus a bootstrap spread of the group's slope-increment estimate (Q3).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "bsdesign/errors.hpp"
#include "bsdesign/model.hpp"
#include "bsdesign/optimizer.hpp"
#include "bsdesign/random.hpp"
#include "bsdesign/scheduler.hpp"

namespace bsdesign {

// CDF of the uniform law on [0,1].
struct UniformCdf {
  double at(double x) const { return std::clamp(x, 0.0, 1.0); }
  double left(double x) const { return at(x); }
  std::span<const double> jumps() const { return {}; }
};

// Right-continuous step CDF with jumps at `support`.
class DiscreteCdf {
 public:
  DiscreteCdf(std::vector<double> support, std::vector<double> cdf)
      : support_(std::move(support)), cdf_(std::move(cdf)) {
    if (support_.size() != cdf_.size() || support_.empty()) {
      throw InvalidArgument("discrete CDF needs matching nonempty support and values");
    }
  }

  explicit DiscreteCdf(const GeneratingDistribution& g) : DiscreteCdf(g.support, g.cdf) {}

  double at(double x) const {
    const auto it = std::upper_bound(support_.begin(), support_.end(), x);
    return it == support_.begin() ? 0.0 : cdf_[static_cast<std::size_t>(it - support_.begin()) - 1];
  }
  double left(double x) const {
    const auto it = std::lower_bound(support_.begin(), support_.end(), x);
    return it == support_.begin() ? 0.0 : cdf_[static_cast<std::size_t>(it - support_.begin()) - 1];
  }
  std::span<const double> jumps() const { return support_; }

 private:
  std::vector<double> support_;
  std::vector<double> cdf_;
};

// sup_x |F_n(x) - F(x)|. Between consecutive candidates (sample points and
// reference jumps) both functions are monotone and F_n is flat, so the
// supremum is attained at a one-sided limit of some candidate.
template <class Reference>
double ks_distance(std::span<const double> sample, const Reference& ref) {
  if (sample.empty()) throw InvalidArgument("KS distance of an empty sample");
  std::vector<double> xs(sample.begin(), sample.end());
  std::sort(xs.begin(), xs.end());
  std::vector<double> cand(xs);
  const auto j = ref.jumps();
  cand.insert(cand.end(), j.begin(), j.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

  const double n = static_cast<double>(xs.size());
  double sup = 0.0;
  for (double c : cand) {
    const auto lo = std::lower_bound(xs.begin(), xs.end(), c);
    const auto hi = std::upper_bound(lo, xs.end(), c);
    const double below = static_cast<double>(lo - xs.begin()) / n;
    const double upto = static_cast<double>(hi - xs.begin()) / n;
    sup = std::max({sup, std::abs(upto - ref.at(c)), std::abs(below - ref.left(c))});
  }
  return std::clamp(sup, 0.0, 1.0);
}

// Each subject's visit times as an empirical distribution on [0,1].
struct EmpiricalDesign {
  std::vector<std::vector<double>> subjects;

  // Rescales every subject to (t - first) / (last - first); a subject whose
  // visits share one time is kept as recorded.
  static EmpiricalDesign from_dataset(const LongitudinalDataset& data) {
    EmpiricalDesign d;
    for (const auto& s : data.subjects) {
      if (s.size() < 2) throw InvalidArgument("subject " + s.id + " has fewer than 2 visits");
      std::vector<double> t = s.times;
      std::sort(t.begin(), t.end());
      const double span = t.back() - t.front();
      if (span > 0.0) {
        const double first = t.front();
        for (double& x : t) x = std::clamp((x - first) / span, 0.0, 1.0);
      }
      d.subjects.push_back(std::move(t));
    }
    return d;
  }

  void validate() const {
    if (subjects.empty()) throw InvalidArgument("empirical design has no subjects");
    for (const auto& s : subjects) {
      if (s.size() < 2) throw InvalidArgument("each subject needs at least 2 visits");
      for (double x : s) check_time(x);
    }
  }
};

template <class Reference>
double mean_ks_distance(const EmpiricalDesign& design, const Reference& ref) {
  design.validate();
  double total = 0.0;
  for (const auto& s : design.subjects) total += ks_distance(s, ref);
  return total / static_cast<double>(design.subjects.size());
}

inline double q1_uniform(const EmpiricalDesign& design) {
  return mean_ks_distance(design, UniformCdf{});
}

struct EmpiricalChangepoints {
  PriorPMF pmf;
  std::size_t fitted = 0;
  std::size_t skipped = 0;
};

// Relative frequencies of the per-subject profile estimates of gamma.
inline EmpiricalChangepoints empirical_changepoint_pmf(const LongitudinalDataset& group,
                                                       std::span<const double> gamma_grid) {
  std::map<double, std::size_t> freq;
  EmpiricalChangepoints out;
  for (const auto& s : group.subjects) {
    if (s.size() < 4) {
      ++out.skipped;
      continue;
    }
    try {
      const double g = profile_fit(s, gamma_grid).gamma;
      ++freq[std::clamp(g, kBoundaryGuard, 1.0 - kBoundaryGuard)];
      ++out.fitted;
    } catch (const NoFeasibleGamma&) {
      ++out.skipped;
    }
  }
  if (freq.empty()) throw DegeneratePrior("no subject of the group could be fitted");
  std::vector<double> pts, ms;
  for (const auto& [g, c] : freq) {
    pts.push_back(g);
    ms.push_back(static_cast<double>(c) / static_cast<double>(out.fitted));
  }
  out.pmf = PriorPMF(std::move(pts), std::move(ms));
  return out;
}

inline double q2_eq(const EmpiricalDesign& design, const PriorPMF& empirical_pmf,
                    const DesignWeights& w) {
  return mean_ks_distance(design, DiscreteCdf(build_generating_distribution(empirical_pmf, w)));
}

inline double q2_eq(const EmpiricalDesign& design, const LongitudinalDataset& group,
                    const DesignWeights& w, std::span<const double> gamma_grid) {
  return q2_eq(design, empirical_changepoint_pmf(group, gamma_grid).pmf, w);
}

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct GroupEvaluation {
  std::string group_id;
  double q1 = kMissing;
  double q2 = kMissing;
  double ratio = kMissing;
  double q3 = kMissing;
  std::size_t n_subjects = 0;
};

struct TrendLine {
  double slope = 0.0;
  double intercept = 0.0;
  double p_value = 1.0;
};

// Least-squares line of y on x with the two-sided slope t-test. Needs at
// least 3 points; with no spread in x the slope is reported as 0 (p = 1).
inline std::optional<TrendLine> fit_trend(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 3 || y.size() != n) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (!(sxx > 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(n))) {
    return TrendLine{0.0, my, 1.0};
  }
  TrendLine t;
  t.slope = sxy / sxx;
  t.intercept = my - t.slope * mx;
  const double sse = std::max(0.0, syy - t.slope * sxy);
  const double df = static_cast<double>(n) - 2.0;
  const double se = std::sqrt(sse / df / sxx);
  if (!(se > 0.0)) {
    t.p_value = t.slope == 0.0 ? 1.0 : 0.0;
    return t;
  }
  const boost::math::students_t dist(df);
  t.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.slope / se)));
  return t;
}

struct GroupedDataset {
  // Ordered by group key.
  std::map<std::string, LongitudinalDataset> groups;
};

struct EvaluationOptions {
  DesignWeights weights{0.0, 0.0, 1.0};
  std::size_t gamma_grid_size = 199;
  int bootstrap = 200;
  std::uint64_t seed = 1;

  friend bool operator==(const EvaluationOptions&, const EvaluationOptions&) = default;
};

struct EvaluationResult {
  std::vector<GroupEvaluation> rows;
  std::optional<TrendLine> trend;
  std::vector<std::string> warnings;
};

// Standard deviation of the pooled slope-increment estimate over subject
// resamples. Every group uses the same resampling streams (keyed by the seed
// and resample index only), so identical groups yield identical values.
inline double bootstrap_beta2_sd(const LongitudinalDataset& group, std::span<const double> grid,
                                 int resamples, std::uint64_t seed) {
  const std::size_t m = group.subjects.size();
  if (m == 0 || resamples < 2) return kMissing;
  std::vector<double> est;
  for (int b = 0; b < resamples; ++b) {
    RandomStream rng(stream_key({seed, fnv1a("bootstrap"), static_cast<std::uint64_t>(b)}));
    LongitudinalDataset sample;
    sample.subjects.reserve(m);
    for (std::size_t i = 0; i < m; ++i) sample.subjects.push_back(group.subjects[rng.below(m)]);
    const Subject pooled = sample.pooled();
    if (pooled.size() < 4) continue;
    try {
      est.push_back(profile_fit(pooled, grid).beta2);
    } catch (const NoFeasibleGamma&) {
    }
  }
  if (est.size() < 2) return kMissing;
  double mean = 0.0;
  for (double v : est) mean += v;
  mean /= static_cast<double>(est.size());
  double ss = 0.0;
  for (double v : est) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(est.size() - 1));
}

inline EvaluationResult evaluate_groups(const GroupedDataset& data, const EvaluationOptions& opt) {
  opt.weights.validate();
  if (data.groups.empty()) throw InvalidArgument("no groups to evaluate");
  const auto grid = interior_grid(opt.gamma_grid_size);

  EvaluationResult out;
  std::vector<double> xs, ys;
  for (const auto& [key, group] : data.groups) {
    GroupEvaluation row;
    row.group_id = key;
    row.n_subjects = group.subjects.size();
    try {
      const auto design = EmpiricalDesign::from_dataset(group);
      row.q1 = q1_uniform(design);
      const auto cps = empirical_changepoint_pmf(group, grid);
      if (cps.skipped > 0) {
        out.warnings.push_back("group " + key + ": " + std::to_string(cps.skipped) +
                               " subject(s) could not be fitted individually");
      }
      row.q2 = q2_eq(design, cps.pmf, opt.weights);
      row.ratio = row.q1 > 0.0 ? row.q2 / row.q1 : kMissing;
      row.q3 = bootstrap_beta2_sd(group, grid, opt.bootstrap, opt.seed);
    } catch (const Error& e) {
      out.warnings.push_back("group " + key + ": " + e.name() + ": " + e.what());
    }
    if (std::isnan(row.q3)) {
      out.warnings.push_back("group " + key + ": no slope-increment spread available");
    } else if (!std::isnan(row.ratio)) {
      xs.push_back(row.ratio);
      ys.push_back(row.q3);
    }
    out.rows.push_back(std::move(row));
  }
  out.trend = fit_trend(xs, ys);
  return out;
}

}  // namespace bsdesign
