#pragma once

// Synthetic grouped longitudinal data whose groups move, one step at a time,
// from the variance-optimal schedule to the equally spaced one.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "bsdesign/metrics.hpp"
#include "bsdesign/random.hpp"
#include "bsdesign/scheduler.hpp"
#include "bsdesign/simulation.hpp"
#include "bsdesign/truncated_normal.hpp"

namespace bsdesign {

struct GradientFixtureOptions {
  int groups = 12;
  int subjects_per_group = 60;
  int n_visits = 12;
  double mu = 0.3;
  double sigma = 0.01;
  // Spread of the subjects' true change-points; 0 puts every one at mu.
  double truth_sigma = 0.0;
  double re_var = 0.01;
  double noise_var = 0.0001;
  std::uint64_t seed = 2024;
};

// Group g (0-based) visits at (1 - t) * EQ_j + t * ES_j with t = g / (groups - 1):
// the first group follows the optimal schedule for TN(mu, sigma), the last
// the equally spaced one. True change-points are drawn from
// TN(mu, truth_sigma), by default all at mu, so the spread of the pooled
// slope-increment estimate follows each group's design variance. Both
// schedules start at 0 and end at 1, so per-subject rescaling is a no-op.
inline GroupedDataset make_gradient_fixture(const GradientFixtureOptions& opt = {}) {
  const Schedule eq = schedule_eq(PriorSpec::truncated_normal(opt.mu, opt.sigma),
                                  DesignWeights{0.0, 0.0, 1.0}, opt.n_visits);
  const Schedule es = schedule_es(opt.n_visits);
  const std::optional<TruncatedNormal> truth =
      opt.truth_sigma > 0.0 ? std::optional<TruncatedNormal>(std::in_place, opt.mu, opt.truth_sigma)
                            : std::nullopt;

  GroupedDataset out;
  for (int g = 0; g < opt.groups; ++g) {
    const double t = opt.groups > 1 ? static_cast<double>(g) / (opt.groups - 1) : 0.0;
    std::vector<double> visits(static_cast<std::size_t>(opt.n_visits));
    for (std::size_t j = 0; j < visits.size(); ++j) {
      visits[j] = (1.0 - t) * eq.visits[j] + t * es.visits[j];
    }
    char key[16];
    std::snprintf(key, sizeof key, "G%02d", g + 1);
    LongitudinalDataset group;
    for (int i = 0; i < opt.subjects_per_group; ++i) {
      RandomStream rng(stream_key({opt.seed, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(i)}));
      const double u = rng.uniform();
      const BrokenStickParams mean{0.0, -2.0, -4.0, truth ? truth->from_uniform(u) : opt.mu, 0.0};
      const double intercept = std::sqrt(opt.re_var) * rng.normal();
      char id[32];
      std::snprintf(id, sizeof id, "%s-%03d", key, i + 1);
      Subject s;
      s.id = id;
      s.times = visits;
      for (double x : s.times) {
        s.responses.push_back(broken_stick_mean(mean, x) + intercept +
                              std::sqrt(opt.noise_var) * rng.normal());
      }
      group.subjects.push_back(std::move(s));
    }
    out.groups.emplace(key, std::move(group));
  }
  return out;
}

}  // namespace bsdesign
