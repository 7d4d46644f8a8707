#pragma once

// The bsdesign command line: a strict JSON run configuration, flag
// overrides, and the schedule / variance / simulate / evaluate commands.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bsdesign/errors.hpp"
#include "bsdesign/io.hpp"
#include "bsdesign/metrics.hpp"
#include "bsdesign/optimizer.hpp"
#include "bsdesign/random.hpp"
#include "bsdesign/scheduler.hpp"
#include "bsdesign/simulation.hpp"

namespace bsdesign::cli {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCompute = 3;

// Discrete prior as written in the config; normalized only when used, so a
// dumped config reads back to the same values.
struct DiscretePriorInput {
  std::vector<double> points;
  std::vector<double> masses;

  friend bool operator==(const DiscretePriorInput&, const DiscretePriorInput&) = default;
};

struct SimulationBlock {
  FactorialGrid grid{{0.25}, {0.01}, {10}, {Design::ES, Design::EQ}};
  int m_subjects = 100;
  int replicates = 100;
  double beta0 = 0.0;
  double beta1 = -2.0;
  double beta2 = -4.0;
  double re_var = 0.01;
  double noise_var = 0.01;
  std::size_t gamma_grid_size = 199;
  std::size_t prior_grid_size = kDefaultPriorGrid;

  friend bool operator==(const SimulationBlock&, const SimulationBlock&) = default;
};

struct EvaluateBlock {
  std::string input;
  std::size_t gamma_grid_size = 199;
  int bootstrap = 200;

  friend bool operator==(const EvaluateBlock&, const EvaluateBlock&) = default;
};

struct RunConfig {
  std::variant<TruncatedNormalPrior, DiscretePriorInput> prior = TruncatedNormalPrior{};
  DesignWeights weights;
  int n_visits = 10;
  Design design = Design::EQ;
  double sigma2 = 1.0;
  std::optional<std::vector<double>> proportions;
  std::optional<std::vector<double>> schedule;
  SimulationBlock simulation;
  EvaluateBlock evaluate;
  std::uint64_t seed = 1;
  std::string out;
  io::Format format = io::Format::Csv;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline std::string_view design_token(Design d) {
  switch (d) {
    case Design::ES: return "es";
    case Design::EQ: return "eq";
    case Design::EQ_80: return "eq80";
    case Design::EQ_120: return "eq120";
    case Design::EQ_Left: return "eqleft";
    case Design::EQ_Right: return "eqright";
  }
  return "?";
}

// JSON <-> RunConfig

namespace detail {

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ParseError("unknown key '" + key + "' in " + where);
    }
  }
}

inline double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + " must be a number");
  return j.get<double>();
}

inline long long get_integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ParseError(where + " must be an integer");
  return j.get<long long>();
}

inline std::uint64_t get_unsigned(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
  throw ParseError(where + " must be a nonnegative integer");
}

inline std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ParseError(where + " must be a string");
  return j.get<std::string>();
}

inline std::vector<double> get_numbers(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + " must be an array of numbers");
  std::vector<double> v;
  for (const auto& e : j) v.push_back(get_number(e, where));
  return v;
}

inline Design get_design(const json& j, const std::string& where) {
  try {
    return parse_design(get_string(j, where));
  } catch (const InvalidArgument& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline io::Format parse_format(std::string_view s) {
  if (s == "csv") return io::Format::Csv;
  if (s == "json") return io::Format::Json;
  throw ParseError("format must be csv or json, not '" + std::string(s) + "'");
}

inline void read_prior(const json& j, RunConfig& c) {
  if (!j.is_object() || !j.contains("type")) throw ParseError("prior needs a type");
  const auto type = get_string(j["type"], "prior.type");
  if (type == "truncated_normal") {
    check_keys(j, {"type", "mu", "sigma", "grid_size"}, "prior");
    TruncatedNormalPrior p;
    if (j.contains("mu")) p.mu = get_number(j["mu"], "prior.mu");
    if (j.contains("sigma")) p.sigma = get_number(j["sigma"], "prior.sigma");
    if (j.contains("grid_size")) p.grid_size = get_unsigned(j["grid_size"], "prior.grid_size");
    c.prior = p;
  } else if (type == "discrete") {
    check_keys(j, {"type", "points", "masses"}, "prior");
    if (!j.contains("points") || !j.contains("masses")) {
      throw ParseError("discrete prior needs points and masses");
    }
    c.prior = DiscretePriorInput{get_numbers(j["points"], "prior.points"),
                                 get_numbers(j["masses"], "prior.masses")};
  } else {
    throw ParseError("prior.type must be truncated_normal or discrete");
  }
}

inline void read_simulation(const json& j, SimulationBlock& s) {
  check_keys(j,
             {"mu", "sigma", "n_visits", "designs", "m_subjects", "replicates", "beta", "re_var",
              "noise_var", "gamma_grid_size", "prior_grid_size"},
             "simulation");
  if (j.contains("mu")) s.grid.mu = get_numbers(j["mu"], "simulation.mu");
  if (j.contains("sigma")) s.grid.sigma = get_numbers(j["sigma"], "simulation.sigma");
  if (j.contains("n_visits")) {
    if (!j["n_visits"].is_array()) throw ParseError("simulation.n_visits must be an array");
    s.grid.n_visits.clear();
    for (const auto& e : j["n_visits"]) {
      s.grid.n_visits.push_back(static_cast<int>(get_integer(e, "simulation.n_visits")));
    }
  }
  if (j.contains("designs")) {
    if (!j["designs"].is_array()) throw ParseError("simulation.designs must be an array");
    s.grid.designs.clear();
    for (const auto& e : j["designs"]) s.grid.designs.push_back(get_design(e, "simulation.designs"));
  }
  if (j.contains("m_subjects")) s.m_subjects = static_cast<int>(get_integer(j["m_subjects"], "simulation.m_subjects"));
  if (j.contains("replicates")) s.replicates = static_cast<int>(get_integer(j["replicates"], "simulation.replicates"));
  if (j.contains("beta")) {
    const auto b = get_numbers(j["beta"], "simulation.beta");
    if (b.size() != 3) throw ParseError("simulation.beta needs three values");
    s.beta0 = b[0];
    s.beta1 = b[1];
    s.beta2 = b[2];
  }
  if (j.contains("re_var")) s.re_var = get_number(j["re_var"], "simulation.re_var");
  if (j.contains("noise_var")) s.noise_var = get_number(j["noise_var"], "simulation.noise_var");
  if (j.contains("gamma_grid_size")) s.gamma_grid_size = get_unsigned(j["gamma_grid_size"], "simulation.gamma_grid_size");
  if (j.contains("prior_grid_size")) s.prior_grid_size = get_unsigned(j["prior_grid_size"], "simulation.prior_grid_size");
}

inline void read_evaluate(const json& j, EvaluateBlock& e) {
  check_keys(j, {"input", "gamma_grid_size", "bootstrap"}, "evaluate");
  if (j.contains("input")) e.input = get_string(j["input"], "evaluate.input");
  if (j.contains("gamma_grid_size")) e.gamma_grid_size = get_unsigned(j["gamma_grid_size"], "evaluate.gamma_grid_size");
  if (j.contains("bootstrap")) e.bootstrap = static_cast<int>(get_integer(j["bootstrap"], "evaluate.bootstrap"));
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  detail::check_keys(j,
                     {"prior", "weights", "n_visits", "design", "sigma2", "proportions", "schedule",
                      "simulation", "evaluate", "seed", "out", "format"},
                     "config");
  RunConfig c;
  if (j.contains("prior")) detail::read_prior(j["prior"], c);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    detail::check_keys(w, {"a0", "a1", "a2"}, "weights");
    if (w.contains("a0")) c.weights.a0 = detail::get_number(w["a0"], "weights.a0");
    if (w.contains("a1")) c.weights.a1 = detail::get_number(w["a1"], "weights.a1");
    if (w.contains("a2")) c.weights.a2 = detail::get_number(w["a2"], "weights.a2");
  }
  if (j.contains("n_visits")) c.n_visits = static_cast<int>(detail::get_integer(j["n_visits"], "n_visits"));
  if (j.contains("design")) c.design = detail::get_design(j["design"], "design");
  if (j.contains("sigma2")) c.sigma2 = detail::get_number(j["sigma2"], "sigma2");
  if (j.contains("proportions") && !j["proportions"].is_null()) {
    c.proportions = detail::get_numbers(j["proportions"], "proportions");
  }
  if (j.contains("schedule") && !j["schedule"].is_null()) {
    c.schedule = detail::get_numbers(j["schedule"], "schedule");
  }
  if (j.contains("simulation")) detail::read_simulation(j["simulation"], c.simulation);
  if (j.contains("evaluate")) detail::read_evaluate(j["evaluate"], c.evaluate);
  if (j.contains("seed")) c.seed = detail::get_unsigned(j["seed"], "seed");
  if (j.contains("out")) c.out = detail::get_string(j["out"], "out");
  if (j.contains("format")) c.format = detail::parse_format(detail::get_string(j["format"], "format"));
  return c;
}

inline RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

inline json config_to_json(const RunConfig& c) {
  json j;
  if (const auto* tn = std::get_if<TruncatedNormalPrior>(&c.prior)) {
    j["prior"] = {{"type", "truncated_normal"}, {"mu", tn->mu}, {"sigma", tn->sigma}, {"grid_size", tn->grid_size}};
  } else {
    const auto& d = std::get<DiscretePriorInput>(c.prior);
    j["prior"] = {{"type", "discrete"}, {"points", d.points}, {"masses", d.masses}};
  }
  j["weights"] = {{"a0", c.weights.a0}, {"a1", c.weights.a1}, {"a2", c.weights.a2}};
  j["n_visits"] = c.n_visits;
  j["design"] = design_token(c.design);
  j["sigma2"] = c.sigma2;
  j["proportions"] = c.proportions ? json(*c.proportions) : json(nullptr);
  j["schedule"] = c.schedule ? json(*c.schedule) : json(nullptr);
  const auto& s = c.simulation;
  json designs = json::array();
  for (Design d : s.grid.designs) designs.push_back(design_token(d));
  j["simulation"] = {{"mu", s.grid.mu},
                     {"sigma", s.grid.sigma},
                     {"n_visits", s.grid.n_visits},
                     {"designs", designs},
                     {"m_subjects", s.m_subjects},
                     {"replicates", s.replicates},
                     {"beta", {s.beta0, s.beta1, s.beta2}},
                     {"re_var", s.re_var},
                     {"noise_var", s.noise_var},
                     {"gamma_grid_size", s.gamma_grid_size},
                     {"prior_grid_size", s.prior_grid_size}};
  j["evaluate"] = {{"input", c.evaluate.input},
                   {"gamma_grid_size", c.evaluate.gamma_grid_size},
                   {"bootstrap", c.evaluate.bootstrap}};
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["format"] = c.format == io::Format::Json ? "json" : "csv";
  return j;
}

inline std::string dump_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

// FNV-1a of the canonical (sorted-key) config with the output path removed,
// so the same computation hashes the same wherever it is written.
inline std::uint64_t config_hash(const RunConfig& c) {
  auto j = config_to_json(c);
  j.erase("out");
  return fnv1a(j.dump());
}

// Config -> library inputs

inline PriorSpec prior_spec(const RunConfig& c) {
  if (const auto* tn = std::get_if<TruncatedNormalPrior>(&c.prior)) return {*tn};
  const auto& d = std::get<DiscretePriorInput>(c.prior);
  return PriorSpec::discrete(PriorPMF(d.points, d.masses));
}

// The prior the configured EQ-type design schedules from; the mis-specified
// variants perturb a truncated-normal prior.
inline PriorSpec scheduling_prior(const RunConfig& c) {
  if (c.design == Design::EQ) return prior_spec(c);
  const auto* tn = std::get_if<TruncatedNormalPrior>(&c.prior);
  if (!tn) throw InvalidArgument("design " + std::string(design_token(c.design)) + " needs a truncated_normal prior");
  SimulationSetting s;
  s.mu = tn->mu;
  s.sigma = tn->sigma;
  s.design = c.design;
  s.params.prior_grid_size = tn->grid_size;
  return design_prior(s);
}

inline SimulationParams simulation_params(const RunConfig& c) {
  const auto& s = c.simulation;
  SimulationParams p;
  p.beta0 = s.beta0;
  p.beta1 = s.beta1;
  p.beta2 = s.beta2;
  p.weights = c.weights;
  p.m_subjects = s.m_subjects;
  p.re_var = s.re_var;
  p.noise_var = s.noise_var;
  p.replicates = s.replicates;
  p.master_seed = c.seed;
  p.gamma_grid_size = s.gamma_grid_size;
  p.prior_grid_size = s.prior_grid_size;
  return p;
}

inline EvaluationOptions evaluation_options(const RunConfig& c) {
  EvaluationOptions o;
  o.weights = c.weights;
  o.gamma_grid_size = c.evaluate.gamma_grid_size;
  o.bootstrap = c.evaluate.bootstrap;
  o.seed = c.seed;
  return o;
}

// Checks everything that does not need computation: value ranges, presence
// of inputs and writability of outputs.
inline void validate_config(const RunConfig& c, std::string_view command) {
  c.weights.validate();
  if (const auto* tn = std::get_if<TruncatedNormalPrior>(&c.prior)) {
    if (!(tn->sigma > 0.0)) throw InvalidArgument("prior.sigma must be > 0");
    if (tn->grid_size < 3) throw InvalidArgument("prior.grid_size must be >= 3");
  } else {
    const auto& d = std::get<DiscretePriorInput>(c.prior);
    if (d.points.empty() || d.points.size() != d.masses.size()) {
      throw InvalidArgument("discrete prior needs matching, nonempty points and masses");
    }
  }
  if (!c.out.empty()) io::check_output_path(c.out);
  if (command == "schedule" || command == "variance") {
    if (c.n_visits < 1) throw InvalidArgument("n_visits must be >= 1");
    if (c.design == Design::ES && c.n_visits < 2) throw InvalidArgument("the ES design needs n_visits >= 2");
    if (c.design != Design::EQ && c.design != Design::ES &&
        !std::holds_alternative<TruncatedNormalPrior>(c.prior)) {
      throw InvalidArgument("mis-specified designs need a truncated_normal prior");
    }
  }
  if (command == "variance") {
    if (!(c.sigma2 > 0.0)) throw InvalidArgument("sigma2 must be > 0");
    if (c.proportions && c.schedule) throw InvalidArgument("give either proportions or schedule, not both");
    if (c.schedule) {
      if (c.schedule->empty()) throw InvalidArgument("schedule is empty");
      for (double t : *c.schedule) check_time(t);
    }
    if (c.proportions) {
      for (double q : *c.proportions) {
        if (!(q >= 0.0)) throw InvalidArgument("proportions must be nonnegative");
      }
    }
  }
  if (command == "simulate") {
    const auto p = simulation_params(c);
    p.validate();
    if (c.simulation.grid.size() == 0) throw InvalidArgument("simulation grid has an empty factor");
    for (double s : c.simulation.grid.sigma) {
      if (!(s > 0.0)) throw InvalidArgument("simulation.sigma values must be > 0");
    }
    for (int n : c.simulation.grid.n_visits) {
      if (n < 2) throw InvalidArgument("simulation.n_visits values must be >= 2");
    }
  }
  if (command == "evaluate") {
    if (c.evaluate.input.empty()) throw InvalidArgument("evaluate needs an input file (--input)");
    if (!std::filesystem::is_regular_file(c.evaluate.input)) {
      throw InvalidArgument("input file not found: " + c.evaluate.input);
    }
    if (c.evaluate.gamma_grid_size < 1) throw InvalidArgument("evaluate.gamma_grid_size must be >= 1");
    if (c.evaluate.bootstrap < 2) throw InvalidArgument("evaluate.bootstrap must be >= 2");
  }
}

// Commands

struct Context {
  RunConfig config;
  unsigned workers = 1;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

inline void emit(const Context& ctx, const io::Table& t, const std::string& path) {
  const auto text = io::render(t, ctx.config.format, {ctx.config.seed, config_hash(ctx.config)});
  if (path.empty()) {
    *ctx.out << text;
  } else {
    io::write_atomic(path, text);
  }
}

inline Schedule configured_schedule(const RunConfig& c, std::optional<ScheduleResult>* detail = nullptr) {
  if (c.design == Design::ES) return schedule_es(c.n_visits);
  auto r = schedule_eq_detailed(scheduling_prior(c), c.weights, c.n_visits);
  Schedule s = r.schedule;
  if (detail) *detail = std::move(r);
  return s;
}

inline int cmd_schedule(const Context& ctx) {
  const auto& c = ctx.config;
  std::optional<ScheduleResult> detail;
  const Schedule s = configured_schedule(c, &detail);
  auto& out = *ctx.out;
  out << "design " << design_name(c.design) << ", n = " << c.n_visits << "\n";
  if (detail) {
    const auto& g = detail->generating;
    out << "generating distribution (" << g.size() << " support points)\n";
    out << "support,pmf,cdf\n";
    for (std::size_t k = 0; k < g.size(); ++k) {
      out << io::format_double(g.support[k]) << "," << io::format_double(g.pmf[k]) << ","
          << io::format_double(g.cdf[k]) << "\n";
    }
    for (const auto& w : detail->warnings) *ctx.err << "warning: " << w << "\n";
  }
  out << "visits:";
  for (double x : s.visits) out << " " << io::format_double(x);
  out << "\n";
  emit(ctx, io::schedule_table(s), c.out);
  return kExitOk;
}

inline double weighted_sum(const DesignWeights& w, const Vec3& v) {
  double total = 0.0;
  const double a[3] = {w.a0, w.a1, w.a2};
  for (int i = 0; i < 3; ++i) {
    if (a[i] != 0.0) total += a[i] * v[static_cast<std::size_t>(i)];
  }
  return total;
}

// Surrogate variances next to the exact conditional variances at every prior
// support point, for a design given as proportions over the generating
// support or as explicit visit times.
inline io::Table variance_table(const RunConfig& c, std::vector<std::string>& warnings) {
  const PriorPMF prior = discretize_prior(prior_spec(c));
  const auto support = support_of(prior);
  const auto coeffs = compute_share_coefficients(prior, c.weights);

  std::vector<double> q(support.size(), 0.0);
  std::vector<double> times, mult;
  int n = c.n_visits;
  if (c.proportions) {
    if (c.proportions->size() != support.size()) {
      throw InvalidArgument("proportions need " + std::to_string(support.size()) +
                            " entries (0, each prior point, 1)");
    }
    q = *c.proportions;
    double total = 0.0;
    for (double v : q) total += v;
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("proportions must sum to 1");
    times = support;
    for (double v : q) mult.push_back(v * n);
  } else {
    const Schedule s = c.schedule ? Schedule{*c.schedule} : configured_schedule(c);
    n = static_cast<int>(s.size());
    const auto counts = visit_counts(s, support);
    int placed = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      q[k] = static_cast<double>(counts[k]) / n;
      placed += counts[k];
    }
    if (placed < n) {
      warnings.push_back(std::to_string(n - placed) +
                         " visit(s) lie off the generating support and are ignored by the surrogate");
    }
    times = s.visits;
    mult.assign(times.size(), 1.0);
  }

  io::Table t{{"source", "gamma", "mass", "v0", "v1", "v2", "objective", "status"}, {}, 12};
  const auto sv = surrogate_variances_unchecked(q, prior, n, c.sigma2);
  const double objective = surrogate_objective(q, coeffs.d, n, c.sigma2);
  const bool finite = std::isfinite(sv.v0) && std::isfinite(sv.v1) && std::isfinite(sv.v2);
  t.add({std::string("surrogate"), kMissing, kMissing, sv.v0, sv.v1, sv.v2, objective,
         std::string(finite ? "excludes_constants" : "ZeroProportion")});

  Vec3 expected{0.0, 0.0, 0.0};
  bool all_ok = true;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    const double g = prior.point(k);
    try {
      const Vec3 v = exact_variances_weighted(times, mult, g, c.sigma2);
      for (std::size_t i = 0; i < 3; ++i) expected[i] += prior.mass(k) * v[i];
      t.add({std::string("exact"), g, prior.mass(k), v[0], v[1], v[2], weighted_sum(c.weights, v),
             std::string("ok")});
    } catch (const RankDeficient&) {
      all_ok = false;
      t.add({std::string("exact"), g, prior.mass(k), kMissing, kMissing, kMissing, kMissing,
             std::string("RankDeficient")});
    }
  }
  if (all_ok) {
    t.add({std::string("exact_expected"), kMissing, 1.0, expected[0], expected[1], expected[2],
           weighted_sum(c.weights, expected), std::string("ok")});
  } else {
    t.add({std::string("exact_expected"), kMissing, 1.0, kMissing, kMissing, kMissing, kMissing,
           std::string("RankDeficient")});
  }
  return t;
}

inline int cmd_variance(const Context& ctx) {
  std::vector<std::string> warnings;
  const auto t = variance_table(ctx.config, warnings);
  for (const auto& w : warnings) *ctx.err << "warning: " << w << "\n";
  const auto& status = std::get<std::string>(t.rows.front().back());
  if (status == "ZeroProportion") {
    *ctx.err << "ZeroProportion: a support point with positive weight receives no visits; "
                "the surrogate objective is infinite\n";
  }
  emit(ctx, t, ctx.config.out);
  return kExitOk;
}

inline int cmd_simulate(const Context& ctx) {
  const auto& c = ctx.config;
  const auto report = run_factorial(c.simulation.grid, simulation_params(c), ctx.workers);
  emit(ctx, io::report_table(report), c.out);
  int fatal = 0;
  for (const auto& row : report.rows) {
    if (row.fatal.empty()) continue;
    ++fatal;
    *ctx.err << "setting mu=" << io::format_double(row.mu) << " sigma=" << io::format_double(row.sigma)
             << " n=" << row.n_visits << " design=" << design_name(row.design) << ": " << row.fatal
             << "\n";
  }
  if (fatal > 0) {
    *ctx.err << fatal << " setting(s) failed\n";
    return kExitCompute;
  }
  return kExitOk;
}

inline int cmd_evaluate(const Context& ctx) {
  const auto& c = ctx.config;
  const auto data = io::read_grouped_csv(std::filesystem::path(c.evaluate.input));
  const auto result = evaluate_groups(data, evaluation_options(c));
  for (const auto& w : result.warnings) *ctx.err << "warning: " << w << "\n";
  if (!result.trend) *ctx.err << "warning: fewer than 3 groups with complete rows; no trend line\n";
  const auto rows = io::evaluation_table(result);
  const auto trend = io::trend_table(result.trend);
  if (c.out.empty()) {
    emit(ctx, rows, "");
    *ctx.out << "\n";
    emit(ctx, trend, "");
  } else {
    emit(ctx, rows, c.out);
    emit(ctx, trend, io::sibling(c.out, "_trend").string());
  }
  return kExitOk;
}

// Entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variance-optimal visit schedules for broken-stick change-point models", "bsdesign"};
  app.set_version_flag("--version", std::string(io::kToolVersion));

  std::string config_path, out_path, format, design, input;
  std::optional<std::uint64_t> seed;
  std::optional<int> n, replicates;
  bool paper_grid = false, dump = false;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());

  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_path, "output file (stdout when absent)");
  app.add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--design", design, "design")
      ->check(CLI::IsMember({"eq", "es", "eq80", "eq120", "eqleft", "eqright"}));
  app.add_option("--n", n, "number of visits");
  app.add_option("--replicates", replicates, "replicates per simulation setting");
  app.add_option("--input", input, "grouped longitudinal CSV for evaluate");
  app.add_option("--workers", workers, "worker threads (does not affect results)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--paper-grid", paper_grid, "run the full 144-setting factorial");
  app.add_flag("--dump-config", dump, "print the effective configuration and exit");

  const char* names[] = {"schedule", "variance", "simulate", "evaluate"};
  const char* help[] = {"compute an EQ or ES visit schedule", "report design variances",
                        "run the Monte-Carlo factorial", "evaluate grouped longitudinal data"};
  for (int i = 0; i < 4; ++i) app.add_subcommand(names[i], help[i])->fallthrough();
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Context ctx;
  ctx.workers = workers;
  ctx.out = &out;
  ctx.err = &err;
  try {
    RunConfig& c = ctx.config;
    if (!config_path.empty()) c = load_config(config_path);
    if (paper_grid) {
      c.simulation.grid = FactorialGrid::paper();
      c.simulation.m_subjects = 100;
      c.simulation.replicates = 100;
    }
    if (seed) c.seed = *seed;
    if (!out_path.empty()) c.out = out_path;
    if (!format.empty()) c.format = detail::parse_format(format);
    if (!design.empty()) {
      c.design = parse_design(design);
      if (command == "simulate") c.simulation.grid.designs = {c.design};
    }
    if (n) {
      c.n_visits = *n;
      if (command == "simulate") c.simulation.grid.n_visits = {*n};
    }
    if (replicates) c.simulation.replicates = *replicates;
    if (!input.empty()) c.evaluate.input = input;
    if (dump) {
      out << dump_config(c);
      return kExitOk;
    }
    validate_config(c, command);
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (command == "schedule") return cmd_schedule(ctx);
    if (command == "variance") return cmd_variance(ctx);
    if (command == "simulate") return cmd_simulate(ctx);
    return cmd_evaluate(ctx);
  } catch (const ParseError& e) {
    err << e.name() << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return kExitCompute;
  } catch (const std::exception& e) {
    err << "InternalError: " << e.what() << "\n";
    return kExitCompute;
  }
}

}  // namespace bsdesign::cli
