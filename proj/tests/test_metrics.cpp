#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "bsdesign/metrics.hpp"
#include "bsdesign/random.hpp"

using namespace bsdesign;

namespace {

// sup |F_n - F| scanned over every candidate and points just beside it.
template <class Ref>
double ks_scan(std::vector<double> xs, const Ref& ref) {
  std::sort(xs.begin(), xs.end());
  std::vector<double> probe(xs);
  for (double j : ref.jumps()) probe.push_back(j);
  std::vector<double> all;
  for (double p : probe) {
    all.push_back(p);
    all.push_back(std::nextafter(p, -1.0));
    all.push_back(std::nextafter(p, 2.0));
  }
  for (int i = 0; i <= 1000; ++i) all.push_back(i / 1000.0);
  double sup = 0.0;
  const double n = static_cast<double>(xs.size());
  for (double x : all) {
    const double fn = static_cast<double>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) / n;
    sup = std::max(sup, std::abs(fn - ref.at(x)));
  }
  return sup;
}

LongitudinalDataset noisy_group(std::uint64_t seed, int subjects, const std::vector<double>& times) {
  RandomStream rng(stream_key({seed}));
  LongitudinalDataset d;
  for (int i = 0; i < subjects; ++i) {
    const BrokenStickParams p{0.0, -2.0, -4.0, 0.4, 0.0};
    Subject s{"s" + std::to_string(i), times, {}};
    for (double t : times) s.responses.push_back(broken_stick_mean(p, t) + 0.05 * rng.normal());
    d.subjects.push_back(std::move(s));
  }
  return d;
}

}  // namespace

TEST(Metrics, KsHandDerivedValues) {
  const DiscreteCdf three({0.0, 0.5, 1.0}, {1.0 / 3, 2.0 / 3, 1.0});
  const std::vector<double> same{0.0, 0.5, 1.0};
  EXPECT_NEAR(ks_distance(same, three), 0.0, 1e-15);
  const std::vector<double> zero{0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(ks_distance(zero, UniformCdf{}), 1.0);
  EXPECT_NEAR(ks_distance(same, UniformCdf{}), 1.0 / 3.0, 1e-15);
  const std::vector<double> half{0.5};
  EXPECT_DOUBLE_EQ(ks_distance(half, UniformCdf{}), 0.5);
}

TEST(Metrics, KsDiscreteAgainstDiscreteUsesReferenceJumps) {
  // Sample all at 1; reference has a jump of 0.6 at 0.2 the sample never visits.
  const DiscreteCdf ref({0.0, 0.2, 1.0}, {0.1, 0.7, 1.0});
  const std::vector<double> ones{1.0, 1.0};
  EXPECT_NEAR(ks_distance(ones, ref), 0.7, 1e-15);
}

TEST(Metrics, KsMatchesScanAndStaysInUnitInterval) {
  RandomStream rng(stream_key({51}));
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> xs;
    const int n = 1 + static_cast<int>(rng.below(15));
    for (int i = 0; i < n; ++i) xs.push_back(rng.below(3) == 0 ? std::round(rng.uniform() * 4) / 4 : rng.uniform());
    const double u = ks_distance(xs, UniformCdf{});
    EXPECT_GE(u, 0.0);
    EXPECT_LE(u, 1.0);
    EXPECT_NEAR(u, ks_scan(xs, UniformCdf{}), 1e-12);

    const DiscreteCdf ref({0.0, 0.25, 0.6, 1.0}, {0.2, 0.5, 0.9, 1.0});
    const double d = ks_distance(xs, ref);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_NEAR(d, ks_scan(xs, ref), 1e-12);

    auto shuffled = xs;
    std::reverse(shuffled.begin(), shuffled.end());
    EXPECT_EQ(ks_distance(shuffled, ref), d);
  }
}

TEST(Metrics, KsEmptySampleRejected) {
  const std::vector<double> none;
  EXPECT_THROW(ks_distance(none, UniformCdf{}), InvalidArgument);
}

TEST(Metrics, RescalingPerSubject) {
  LongitudinalDataset d;
  d.subjects.push_back({"a", {0.2, 0.4, 0.6}, {0, 0, 0}});
  d.subjects.push_back({"b", {0.3, 0.3}, {0, 0}});
  const auto e = EmpiricalDesign::from_dataset(d);
  ASSERT_EQ(e.subjects[0].size(), 3u);
  EXPECT_EQ(e.subjects[0][0], 0.0);
  EXPECT_NEAR(e.subjects[0][1], 0.5, 1e-15);
  EXPECT_EQ(e.subjects[0][2], 1.0);
  EXPECT_EQ(e.subjects[1], (std::vector<double>{0.3, 0.3}));
  EXPECT_NEAR(q1_uniform(e), (1.0 / 3 + 0.7) / 2, 1e-14);
  d.subjects.push_back({"c", {0.3}, {0}});
  EXPECT_THROW(EmpiricalDesign::from_dataset(d), InvalidArgument);
}

TEST(Metrics, Q2WithPointMassUsesThreePointCdf) {
  const double g = 0.3;
  EmpiricalDesign e{{{0.0, 0.1, 0.3, 0.3, 0.8, 1.0}, {0.0, 0.5, 1.0}}};
  const DiscreteCdf three({0.0, g, 1.0}, {(1 - g) / 2, (1 - g) / 2 + 0.5, 1.0});
  EXPECT_NEAR(q2_eq(e, PriorPMF::point_mass(g), DesignWeights{}), mean_ks_distance(e, three), 1e-12);
}

TEST(Metrics, EmpiricalChangepointPmf) {
  const auto grid = interior_grid(19);
  std::vector<double> t;
  for (int i = 0; i <= 10; ++i) t.push_back(i / 10.0);
  auto d = noisy_group(52, 10, t);
  d.subjects.push_back({"short", {0, 0.5, 1}, {0, 0, 0}});
  const auto cps = empirical_changepoint_pmf(d, grid);
  EXPECT_EQ(cps.fitted, 10u);
  EXPECT_EQ(cps.skipped, 1u);
  double total = 0.0;
  for (double m : cps.pmf.masses()) total += m;
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (double p : cps.pmf.points()) EXPECT_NEAR(p, 0.4, 0.11);
}

TEST(Metrics, TrendAgainstClosedFormP) {
  // Three points: residual df 1, so the t law is Cauchy.
  const std::vector<double> x{0.0, 1.0, 2.0}, y{0.0, 1.0, 3.0};
  const auto t = fit_trend(x, y);
  ASSERT_TRUE(t.has_value());
  EXPECT_NEAR(t->slope, 1.5, 1e-14);
  EXPECT_NEAR(t->intercept, -1.0 / 6.0, 1e-14);
  const double se = std::sqrt((1.0 / 6.0) / 2.0);
  const double p = 1.0 - 2.0 / std::numbers::pi * std::atan(1.5 / se);
  EXPECT_NEAR(t->p_value, p, 1e-12);
}

TEST(Metrics, TrendDegenerateCases) {
  const std::vector<double> two{1.0, 2.0};
  EXPECT_FALSE(fit_trend(two, two).has_value());
  const std::vector<double> flat{0.5, 0.5, 0.5}, y{1.0, 2.0, 6.0};
  const auto t = fit_trend(flat, y);
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->slope, 0.0);
  EXPECT_DOUBLE_EQ(t->intercept, 3.0);
  EXPECT_EQ(t->p_value, 1.0);
  const std::vector<double> x{0.0, 1.0, 2.0}, line{1.0, 3.0, 5.0};
  const auto exact = fit_trend(x, line);
  EXPECT_DOUBLE_EQ(exact->slope, 2.0);
  EXPECT_EQ(exact->p_value, 0.0);
}

TEST(Metrics, BootstrapDeterministicAndSharedStreams) {
  const auto grid = interior_grid(39);
  const auto d = noisy_group(53, 20, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0});
  const double a = bootstrap_beta2_sd(d, grid, 30, 7);
  EXPECT_GT(a, 0.0);
  EXPECT_EQ(a, bootstrap_beta2_sd(d, grid, 30, 7));
  EXPECT_NE(a, bootstrap_beta2_sd(d, grid, 30, 8));
  EXPECT_TRUE(std::isnan(bootstrap_beta2_sd(d, grid, 1, 7)));
}

TEST(Metrics, EvaluateSingleGroupHasNoTrend) {
  GroupedDataset g;
  g.groups["A"] = noisy_group(54, 15, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0});
  EvaluationOptions opt;
  opt.bootstrap = 20;
  const auto r = evaluate_groups(g, opt);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_FALSE(r.trend.has_value());
  EXPECT_GE(r.rows[0].q1, 0.0);
  EXPECT_LE(r.rows[0].q2, 1.0);
  EXPECT_EQ(r.rows[0].n_subjects, 15u);
}

TEST(Metrics, EvaluateDuplicateGroupsGiveEqualRows) {
  GroupedDataset g;
  const auto d = noisy_group(55, 15, {0.0, 0.1, 0.3, 0.5, 0.9, 1.0});
  g.groups["A"] = d;
  g.groups["B"] = d;
  g.groups["C"] = noisy_group(56, 15, {0.0, 0.25, 0.5, 0.75, 1.0});
  EvaluationOptions opt;
  opt.bootstrap = 20;
  const auto r = evaluate_groups(g, opt);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].q1, r.rows[1].q1);
  EXPECT_EQ(r.rows[0].q2, r.rows[1].q2);
  EXPECT_EQ(r.rows[0].q3, r.rows[1].q3);
  EXPECT_TRUE(r.trend.has_value());
  const auto again = evaluate_groups(g, opt);
  EXPECT_EQ(again.trend->slope, r.trend->slope);
}

TEST(Metrics, EvaluateRejectsEmptyInput) {
  EXPECT_THROW(evaluate_groups(GroupedDataset{}, EvaluationOptions{}), InvalidArgument);
}
