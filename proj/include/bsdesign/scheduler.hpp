#pragma once

// From a change-point prior and a visit budget to a concrete visiting
// schedule: discretize the prior, build the scheme-generating distribution
// over (0, gamma_1..gamma_K, 1), and read the visits off its j/n quantiles.

#include <algorithm>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bsdesign/errors.hpp"
#include "bsdesign/model.hpp"
#include "bsdesign/optimizer.hpp"
#include "bsdesign/truncated_normal.hpp"

namespace bsdesign {

inline constexpr std::size_t kDefaultPriorGrid = 101;

// Cumulative sums this close below j/n still count as reaching j/n.
inline constexpr double kQuantileSlack = 1e-12;

struct TruncatedNormalPrior {
  double mu = 0.5;
  double sigma = 0.1;
  std::size_t grid_size = kDefaultPriorGrid;

  friend bool operator==(const TruncatedNormalPrior&, const TruncatedNormalPrior&) = default;
};

struct PriorSpec {
  std::variant<PriorPMF, TruncatedNormalPrior> value;

  static PriorSpec discrete(PriorPMF pmf) { return {std::move(pmf)}; }
  static PriorSpec truncated_normal(double mu, double sigma,
                                    std::size_t grid_size = kDefaultPriorGrid) {
    return {TruncatedNormalPrior{mu, sigma, grid_size}};
  }

  bool is_discrete() const { return std::holds_alternative<PriorPMF>(value); }

  friend bool operator==(const PriorSpec&, const PriorSpec&) = default;
};

// Equal-width bins over [guard, 1 - guard]; each bin's truncated-normal mass
// (truncation to (0,1)) is placed at the bin midpoint.
inline PriorPMF discretize_prior(const PriorSpec& spec) {
  if (const auto* pmf = std::get_if<PriorPMF>(&spec.value)) {
    if (pmf->size() == 0) throw DegeneratePrior("discrete prior is empty");
    return *pmf;
  }
  const auto& tn = std::get<TruncatedNormalPrior>(spec.value);
  if (!(tn.sigma > 0.0)) throw InvalidArgument("truncated normal prior needs sigma > 0");
  if (tn.grid_size < 3) throw InvalidArgument("prior grid needs at least 3 bins");

  const TruncatedNormal law(tn.mu, tn.sigma, 0.0, 1.0);
  const double lo = kBoundaryGuard;
  const double width = (1.0 - 2.0 * kBoundaryGuard) / static_cast<double>(tn.grid_size);
  std::vector<double> points, masses;
  points.reserve(tn.grid_size);
  masses.reserve(tn.grid_size);
  for (std::size_t b = 0; b < tn.grid_size; ++b) {
    const double left = lo + width * static_cast<double>(b);
    const double right = b + 1 == tn.grid_size ? 1.0 - kBoundaryGuard : left + width;
    points.push_back(0.5 * (left + right));
    masses.push_back(law.probability(left, right));
  }
  try {
    return PriorPMF(std::move(points), std::move(masses));
  } catch (const DegeneratePrior&) {
    throw DegeneratePrior("truncated normal prior puts no mass on any bin");
  }
}

struct GeneratingDistribution {
  std::vector<double> support;
  std::vector<double> pmf;
  std::vector<double> cdf;

  std::size_t size() const noexcept { return support.size(); }
};

inline GeneratingDistribution make_generating_distribution(std::vector<double> support,
                                                           std::vector<double> pmf) {
  if (support.size() != pmf.size() || support.empty()) {
    throw InvalidArgument("generating distribution needs matching, nonempty support and pmf");
  }
  GeneratingDistribution g{std::move(support), std::move(pmf), {}};
  g.cdf.resize(g.pmf.size());
  double run = 0.0;
  for (std::size_t k = 0; k < g.pmf.size(); ++k) {
    if (!(g.pmf[k] >= 0.0)) throw InvalidArgument("pmf entries must be nonnegative");
    if (k > 0 && !(g.support[k] > g.support[k - 1])) {
      throw InvalidArgument("support must be strictly increasing");
    }
    run += g.pmf[k];
    g.cdf[k] = run;
  }
  if (std::abs(run - 1.0) > 1e-9) throw InvalidArgument("pmf does not sum to one");
  g.cdf.back() = 1.0;
  return g;
}

inline GeneratingDistribution build_generating_distribution(const PriorPMF& prior,
                                                            const DesignWeights& w) {
  auto vp = optimal_proportions(prior, w);
  return make_generating_distribution(std::move(vp.support), std::move(vp.q));
}

struct Schedule {
  std::vector<double> visits;

  std::size_t size() const noexcept { return visits.size(); }

  std::size_t distinct_times() const {
    return std::set<double>(visits.begin(), visits.end()).size();
  }

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

// x_j = smallest support point whose CDF reaches j/n.
inline Schedule assign_visits(const GeneratingDistribution& gen, int n) {
  if (n < 1) throw InvalidArgument("visit budget must be at least 1");
  Schedule s;
  s.visits.reserve(static_cast<std::size_t>(n));
  std::size_t k = 0;
  for (int j = 1; j <= n; ++j) {
    const double target = static_cast<double>(j) / static_cast<double>(n);
    while (k + 1 < gen.size() && gen.cdf[k] < target - kQuantileSlack) ++k;
    s.visits.push_back(gen.support[k]);
  }
  return s;
}

// The rejected alternative: x_j = largest support point whose CDF lies
// strictly below j/n (the first point when none does); the final visit sits
// on the last support point, the only one whose CDF reaches 1. Kept for
// comparison only.
inline Schedule assign_visits_left_neighbor(const GeneratingDistribution& gen, int n) {
  if (n < 1) throw InvalidArgument("visit budget must be at least 1");
  Schedule s;
  for (int j = 1; j <= n; ++j) {
    if (j == n) {
      s.visits.push_back(gen.support.back());
      break;
    }
    const double target = static_cast<double>(j) / static_cast<double>(n);
    std::size_t pick = 0;
    for (std::size_t k = 0; k < gen.size(); ++k) {
      if (gen.cdf[k] < target - kQuantileSlack) pick = k;
    }
    s.visits.push_back(gen.support[pick]);
  }
  return s;
}

struct ScheduleResult {
  Schedule schedule;
  GeneratingDistribution generating;
  PriorPMF prior;
  std::vector<std::string> warnings;
};

inline std::string few_times_warning(std::size_t distinct) {
  return "schedule has only " + std::to_string(distinct) +
         " distinct visit time(s); the slope increment is not identifiable";
}

inline ScheduleResult schedule_eq_detailed(const PriorSpec& spec, const DesignWeights& w, int n) {
  ScheduleResult r;
  r.prior = discretize_prior(spec);
  r.generating = build_generating_distribution(r.prior, w);
  r.schedule = assign_visits(r.generating, n);
  const std::size_t distinct = r.schedule.distinct_times();
  if (distinct < 3) r.warnings.push_back(few_times_warning(distinct));
  return r;
}

inline Schedule schedule_eq(const PriorSpec& spec, const DesignWeights& w, int n) {
  return schedule_eq_detailed(spec, w, n).schedule;
}

// Equally spaced visits (j-1)/(n-1), both boundaries included.
inline Schedule schedule_es(int n) {
  if (n < 2) throw InvalidArgument("equally spaced design needs n >= 2");
  Schedule s;
  s.visits.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    s.visits.push_back(static_cast<double>(j) / static_cast<double>(n - 1));
  }
  return s;
}

// Number of visits placed at each support point.
inline std::vector<int> visit_counts(const Schedule& s, std::span<const double> support) {
  std::vector<int> counts(support.size(), 0);
  for (double x : s.visits) {
    const auto it = std::lower_bound(support.begin(), support.end(), x);
    if (it != support.end() && *it == x) ++counts[static_cast<std::size_t>(it - support.begin())];
  }
  return counts;
}

}  // namespace bsdesign
