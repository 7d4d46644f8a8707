#pragma once

// Monte-Carlo comparison of visiting designs: longitudinal data with
// subject-specific change-points and random intercepts are generated on a
// design's schedule, a pooled broken-stick model is profiled over a gamma
// grid, and the spread of the slope-increment estimate is summarized.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "bsdesign/errors.hpp"
#include "bsdesign/model.hpp"
#include "bsdesign/optimizer.hpp"
#include "bsdesign/random.hpp"
#include "bsdesign/scheduler.hpp"
#include "bsdesign/truncated_normal.hpp"

namespace bsdesign {

enum class Design { ES, EQ, EQ_80, EQ_120, EQ_Left, EQ_Right };

inline constexpr Design kAllDesigns[] = {Design::ES,     Design::EQ,      Design::EQ_80,
                                         Design::EQ_120, Design::EQ_Left, Design::EQ_Right};

inline std::string_view design_name(Design d) {
  switch (d) {
    case Design::ES: return "ES";
    case Design::EQ: return "EQ";
    case Design::EQ_80: return "EQ_80";
    case Design::EQ_120: return "EQ_120";
    case Design::EQ_Left: return "EQ_Left";
    case Design::EQ_Right: return "EQ_Right";
  }
  return "?";
}

// Accepts the report names (EQ_Left) and the CLI spellings (eqleft).
inline Design parse_design(std::string_view s) {
  std::string k;
  for (char c : s) {
    if (c != '_' && c != '%') k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (k == "es") return Design::ES;
  if (k == "eq") return Design::EQ;
  if (k == "eq80") return Design::EQ_80;
  if (k == "eq120") return Design::EQ_120;
  if (k == "eqleft") return Design::EQ_Left;
  if (k == "eqright") return Design::EQ_Right;
  throw InvalidArgument("unknown design '" + std::string(s) + "'");
}

// Parameters shared by every cell of an experiment.
struct SimulationParams {
  double beta0 = 0.0;
  double beta1 = -2.0;
  double beta2 = -4.0;
  DesignWeights weights{0.0, 0.0, 1.0};
  int m_subjects = 100;
  double re_var = 0.01;
  double noise_var = 0.01;
  int replicates = 100;
  std::uint64_t master_seed = 1;
  std::size_t gamma_grid_size = 199;
  std::size_t prior_grid_size = kDefaultPriorGrid;

  void validate() const {
    weights.validate();
    if (m_subjects < 1) throw InvalidArgument("m_subjects must be >= 1");
    if (replicates < 1) throw InvalidArgument("replicates must be >= 1");
    if (!(re_var >= 0.0) || !(noise_var >= 0.0)) throw InvalidArgument("variances must be >= 0");
    if (gamma_grid_size < 1) throw InvalidArgument("gamma grid must be nonempty");
  }

  friend bool operator==(const SimulationParams&, const SimulationParams&) = default;
};

struct SimulationSetting {
  double mu = 0.5;
  double sigma = 0.1;
  int n_visits = 10;
  Design design = Design::EQ;
  SimulationParams params;

  void validate() const {
    params.validate();
    if (!(sigma > 0.0)) throw InvalidArgument("prior sigma must be > 0");
    if (n_visits < 1) throw InvalidArgument("n_visits must be >= 1");
    if (n_visits * params.m_subjects < 4) throw InvalidArgument("pooled data needs >= 4 visits");
  }

  // Key of the data-generating process. The design is deliberately absent:
  // all designs of one (mu, sigma, n) cell see common random numbers.
  std::uint64_t data_key() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "mu=%.17g;sigma=%.17g;n=%d;m=%d;re=%.17g;noise=%.17g;b=%.17g,%.17g,%.17g",
                  mu, sigma, n_visits, params.m_subjects, params.re_var, params.noise_var,
                  params.beta0, params.beta1, params.beta2);
    return fnv1a(buf);
  }
};

// The (possibly mis-specified) prior a design schedules from.
inline PriorSpec design_prior(const SimulationSetting& s) {
  const std::size_t g = s.params.prior_grid_size;
  switch (s.design) {
    case Design::EQ: return PriorSpec::truncated_normal(s.mu, s.sigma, g);
    case Design::EQ_80: return PriorSpec::truncated_normal(s.mu, 0.8 * s.sigma, g);
    case Design::EQ_120: return PriorSpec::truncated_normal(s.mu, 1.2 * s.sigma, g);
    case Design::EQ_Left: return PriorSpec::truncated_normal(s.mu - 0.02, s.sigma, g);
    case Design::EQ_Right: return PriorSpec::truncated_normal(s.mu + 0.02, s.sigma, g);
    case Design::ES: break;
  }
  throw InvalidArgument("the ES design has no prior");
}

inline Schedule setting_schedule(const SimulationSetting& s) {
  if (s.design == Design::ES) return schedule_es(s.n_visits);
  return schedule_eq(design_prior(s), s.params.weights, s.n_visits);
}

// Seeds one subject's stream.
inline std::uint64_t subject_stream_key(const SimulationSetting& s, int replicate, int subject) {
  return stream_key({s.params.master_seed, s.data_key(), static_cast<std::uint64_t>(replicate),
                     static_cast<std::uint64_t>(subject)});
}

// Subjects draw their change-point from the true prior TN(mu, sigma, 0, 1),
// then a random intercept, then one noise term per visit.
inline LongitudinalDataset generate_dataset(const SimulationSetting& s, const Schedule& schedule,
                                            int replicate) {
  if (schedule.size() != static_cast<std::size_t>(s.n_visits)) {
    throw InvalidArgument("schedule length differs from n_visits");
  }
  const TruncatedNormal truth(s.mu, s.sigma, 0.0, 1.0);
  const double re_sd = std::sqrt(s.params.re_var);
  const double noise_sd = std::sqrt(s.params.noise_var);

  LongitudinalDataset data;
  data.subjects.reserve(static_cast<std::size_t>(s.params.m_subjects));
  for (int j = 0; j < s.params.m_subjects; ++j) {
    RandomStream rng(subject_stream_key(s, replicate, j));
    const double gamma = truth.from_uniform(rng.uniform());
    const double intercept = re_sd * rng.normal();
    BrokenStickParams mean{s.params.beta0, s.params.beta1, s.params.beta2, gamma, 0.0};

    Subject subj;
    subj.id = std::to_string(j + 1);
    subj.times = schedule.visits;
    subj.responses.reserve(schedule.size());
    for (double x : schedule.visits) {
      subj.responses.push_back(broken_stick_mean(mean, x) + intercept + noise_sd * rng.normal());
    }
    data.subjects.push_back(std::move(subj));
  }
  return data;
}

struct ReplicateResult {
  int replicate_id = 0;
  double beta2_hat = std::numeric_limits<double>::quiet_NaN();
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();
  double rss = std::numeric_limits<double>::quiet_NaN();
  int fit_failures = 0;
};

inline ReplicateResult run_replicate(const SimulationSetting& s, const Schedule& schedule,
                                     std::span<const double> gamma_grid, int replicate) {
  ReplicateResult r;
  r.replicate_id = replicate;
  const Subject pooled = generate_dataset(s, schedule, replicate).pooled();
  try {
    const auto fit = profile_fit(pooled, gamma_grid);
    r.beta2_hat = fit.beta2;
    r.gamma_hat = fit.gamma;
    r.rss = fit.rss;
  } catch (const NoFeasibleGamma&) {
    r.fit_failures = 1;
  }
  return r;
}

struct ReportRow {
  double mu = 0.0;
  double sigma = 0.0;
  int n_visits = 0;
  Design design = Design::ES;
  int replicates = 0;
  double sd_beta2 = std::numeric_limits<double>::quiet_NaN();
  double mean_beta2 = std::numeric_limits<double>::quiet_NaN();
  int failures = 0;
  // Non-empty when the setting could not run at all (e.g. no schedule).
  std::string fatal;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;

  bool has_fatal() const {
    return std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.fatal.empty(); });
  }
};

inline ReportRow blank_row(const SimulationSetting& s) {
  ReportRow row;
  row.mu = s.mu;
  row.sigma = s.sigma;
  row.n_visits = s.n_visits;
  row.design = s.design;
  row.replicates = s.params.replicates;
  return row;
}

// Mean and sample standard deviation of the successful replicates, summed in
// replicate order. One success gives sd 0; none gives NaN.
inline ReportRow summarize(const SimulationSetting& s, std::span<const ReplicateResult> reps) {
  ReportRow row = blank_row(s);
  double sum = 0.0;
  int ok = 0;
  for (const auto& r : reps) {
    if (r.fit_failures > 0) {
      ++row.failures;
      continue;
    }
    sum += r.beta2_hat;
    ++ok;
  }
  if (ok == 0) return row;
  row.mean_beta2 = sum / ok;
  double ss = 0.0;
  for (const auto& r : reps) {
    if (r.fit_failures == 0) ss += (r.beta2_hat - row.mean_beta2) * (r.beta2_hat - row.mean_beta2);
  }
  row.sd_beta2 = ok > 1 ? std::sqrt(ss / (ok - 1)) : 0.0;
  return row;
}

struct FactorialGrid {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<int> n_visits;
  std::vector<Design> designs;

  static FactorialGrid paper() {
    return {{0.25, 0.5, 0.75},
            {0.01, 0.1},
            {10, 15, 20, 25},
            std::vector<Design>(std::begin(kAllDesigns), std::end(kAllDesigns))};
  }

  std::size_t size() const { return mu.size() * sigma.size() * n_visits.size() * designs.size(); }

  friend bool operator==(const FactorialGrid&, const FactorialGrid&) = default;
};

// Settings in nested (mu, sigma, n, design) order.
inline std::vector<SimulationSetting> expand(const FactorialGrid& grid, const SimulationParams& p) {
  if (grid.size() == 0) throw InvalidArgument("factorial grid has an empty factor");
  std::vector<SimulationSetting> out;
  out.reserve(grid.size());
  for (double mu : grid.mu)
    for (double sigma : grid.sigma)
      for (int n : grid.n_visits)
        for (Design d : grid.designs) out.push_back({mu, sigma, n, d, p});
  return out;
}

namespace detail {

// Runs task(i) for i in [0, count) on `workers` threads.
template <class Task>
void parallel_for(std::size_t count, unsigned workers, Task&& task) {
  workers = std::max(1u, workers);
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned w = 0; w < std::min<std::size_t>(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

inline ExperimentReport run_settings(const std::vector<SimulationSetting>& settings,
                                     unsigned workers = 1) {
  struct Prepared {
    Schedule schedule;
    std::string fatal;
  };
  std::vector<Prepared> prep(settings.size());
  for (std::size_t i = 0; i < settings.size(); ++i) {
    try {
      settings[i].validate();
      prep[i].schedule = setting_schedule(settings[i]);
    } catch (const Error& e) {
      prep[i].fatal = e.name() + ": " + e.what();
    }
  }

  std::vector<std::size_t> offset(settings.size() + 1, 0);
  for (std::size_t i = 0; i < settings.size(); ++i) {
    offset[i + 1] = offset[i] + (prep[i].fatal.empty() ? settings[i].params.replicates : 0);
  }
  std::vector<std::vector<double>> grids(settings.size());
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (prep[i].fatal.empty()) grids[i] = interior_grid(settings[i].params.gamma_grid_size);
  }

  std::vector<ReplicateResult> results(offset.back());
  detail::parallel_for(results.size(), workers, [&](std::size_t flat) {
    const auto it = std::upper_bound(offset.begin(), offset.end(), flat);
    const std::size_t i = static_cast<std::size_t>(it - offset.begin()) - 1;
    const int rep = static_cast<int>(flat - offset[i]);
    results[flat] = run_replicate(settings[i], prep[i].schedule, grids[i], rep);
  });

  ExperimentReport report;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const auto& s = settings[i];
    if (!prep[i].fatal.empty()) {
      ReportRow row = blank_row(s);
      row.failures = s.params.replicates;
      row.fatal = prep[i].fatal;
      report.rows.push_back(row);
      continue;
    }
    report.rows.push_back(summarize(
        s, std::span<const ReplicateResult>(results.data() + offset[i], offset[i + 1] - offset[i])));
  }
  return report;
}

inline ReportRow run_setting(const SimulationSetting& s, unsigned workers = 1) {
  return run_settings({s}, workers).rows.front();
}

inline ExperimentReport run_factorial(const FactorialGrid& grid, const SimulationParams& p,
                                      unsigned workers = 1) {
  return run_settings(expand(grid, p), workers);
}

}  // namespace bsdesign
