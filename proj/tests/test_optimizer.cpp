#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bsdesign/optimizer.hpp"
#include "bsdesign/random.hpp"
#include "bsdesign/scheduler.hpp"

using namespace bsdesign;

namespace {

PriorPMF random_prior(RandomStream& rng, std::size_t K) {
  std::vector<double> pts;
  while (pts.size() < K) {
    const double g = 0.05 + 0.9 * rng.uniform();
    if (std::none_of(pts.begin(), pts.end(), [&](double p) { return std::abs(p - g) < 0.02; })) {
      pts.push_back(g);
    }
  }
  std::sort(pts.begin(), pts.end());
  std::vector<double> ms;
  for (std::size_t k = 0; k < K; ++k) ms.push_back(0.1 + rng.uniform());
  return PriorPMF(pts, ms);
}

double objective(const std::vector<double>& q, const ShareCoefficients& c) {
  return surrogate_objective(q, c.d);
}

// Exponentiated-gradient descent on the simplex for sum_k d_k / q_k.
std::vector<double> mirror_descent(const std::vector<double>& d, int iterations) {
  const std::size_t n = d.size();
  std::vector<double> q(n, 1.0 / static_cast<double>(n)), g(n);
  for (int it = 0; it < iterations; ++it) {
    double gmax = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      g[k] = -d[k] / (q[k] * q[k]);
      gmax = std::max(gmax, std::abs(g[k]));
    }
    const double eta = 0.5 / gmax;
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      q[k] *= std::exp(-eta * (g[k] + gmax));
      total += q[k];
    }
    for (double& v : q) v /= total;
  }
  return q;
}

}  // namespace

TEST(Optimizer, KnownChangePointHalfAtGamma) {
  for (int i = 1; i <= 9; ++i) {
    const double g = i / 10.0;
    const auto vp = optimal_proportions(PriorPMF::point_mass(g), DesignWeights{0, 0, 1});
    ASSERT_EQ(vp.size(), 3u);
    EXPECT_NEAR(vp.q[0], (1 - g) / 2, 1e-12);
    EXPECT_NEAR(vp.q[1], 0.5, 1e-12);
    EXPECT_NEAR(vp.q[2], g / 2, 1e-12);
    EXPECT_EQ(vp.support, (std::vector<double>{0.0, g, 1.0}));
  }
}

TEST(Optimizer, ShareCoefficientsByHand) {
  // gamma = 0.25, 0.75 with masses 0.5 each, weights (1, 1, 1).
  const PriorPMF p({0.25, 0.75}, {1, 1});
  const auto c = compute_share_coefficients(p, DesignWeights{1, 1, 1});
  EXPECT_NEAR(c.A[0], 8.0, 1e-12);
  EXPECT_NEAR(c.A[1], 0.5 / 0.5625, 1e-12);
  EXPECT_NEAR(c.B[0], 0.5 / 0.5625, 1e-12);
  EXPECT_NEAR(c.B[1], 8.0, 1e-12);
  const double sumA = 8.0 + 0.5 / 0.5625;
  EXPECT_NEAR(c.d[0], 1.0 + 2.0 * sumA, 1e-12);
  EXPECT_NEAR(c.d[1], 8.0 + 8.0 * (0.5 / 0.5625) / 0.5, 1e-12);
  EXPECT_NEAR(c.d[3], sumA, 1e-12);
}

TEST(Optimizer, NormalizedAndNonnegative) {
  RandomStream rng(stream_key({21}));
  const DesignWeights ws[] = {{0, 0, 1}, {0, 1, 1}, {0, 1, 2}, {1, 1, 1}, {1, 0, 0}};
  for (int trial = 0; trial < 100; ++trial) {
    const auto prior = random_prior(rng, 1 + rng.below(8));
    for (const auto& w : ws) {
      const auto vp = optimal_proportions(prior, w);
      EXPECT_NEAR(std::accumulate(vp.q.begin(), vp.q.end(), 0.0), 1.0, 1e-12);
      for (double q : vp.q) EXPECT_GE(q, 0.0);
    }
  }
}

TEST(Optimizer, StationarityOfClosedForm) {
  // At an interior optimum of sum d_k / q_k on the simplex, d_k / q_k^2 is
  // constant, and the optimum value is (sum sqrt d_k)^2.
  RandomStream rng(stream_key({22}));
  for (int trial = 0; trial < 50; ++trial) {
    const auto prior = random_prior(rng, 1 + rng.below(5));
    const auto c = compute_share_coefficients(prior, DesignWeights{0, 1, 2});
    const auto q = optimal_shares(c.d);
    const double lambda = c.d[0] / (q[0] * q[0]);
    for (std::size_t k = 1; k < q.size(); ++k) EXPECT_NEAR(c.d[k] / (q[k] * q[k]) / lambda, 1.0, 1e-10);
    double root = 0.0;
    for (double d : c.d) root += std::sqrt(d);
    EXPECT_NEAR(objective(q, c) / (root * root), 1.0, 1e-12);
  }
}

TEST(Optimizer, ScaleInvariance) {
  RandomStream rng(stream_key({23}));
  for (int trial = 0; trial < 50; ++trial) {
    const auto prior = random_prior(rng, 1 + rng.below(6));
    const DesignWeights w{rng.uniform(), rng.uniform(), 0.1 + rng.uniform()};
    const double c = std::exp(4.0 * rng.uniform() - 2.0);
    const auto a = optimal_proportions(prior, w);
    const auto b = optimal_proportions(prior, DesignWeights{c * w.a0, c * w.a1, c * w.a2});
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.q[k], b.q[k], 1e-12);
  }
}

TEST(Optimizer, ReflectionSwapsBoundaries) {
  RandomStream rng(stream_key({24}));
  for (int trial = 0; trial < 50; ++trial) {
    const auto prior = random_prior(rng, 1 + rng.below(6));
    const auto a = optimal_proportions(prior, DesignWeights{0, 0, 1});
    const auto b = optimal_proportions(prior.mirrored(), DesignWeights{0, 0, 1});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.q[k], b.q[a.size() - 1 - k], 1e-12);
  }
}

TEST(Optimizer, ZeroWeightGivesZeroShares) {
  const PriorPMF p({0.3, 0.6}, {1, 1});
  const auto vp = optimal_proportions(p, DesignWeights{1, 0, 0});
  EXPECT_EQ(vp.q, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
  EXPECT_THROW(optimal_proportions(p, DesignWeights{0, 0, 0}), InvalidArgument);
  EXPECT_THROW(optimal_proportions(p, DesignWeights{-1, 0, 1}), InvalidArgument);
}

TEST(Optimizer, BruteForceNeverBeatsClosedForm) {
  RandomStream rng(stream_key({25}));
  const DesignWeights ws[] = {{0, 0, 1}, {0, 1, 1}, {0, 1, 2}, {1, 1, 1}};
  for (int trial = 0; trial < 8; ++trial) {
    const auto prior = random_prior(rng, 1 + rng.below(2));
    const auto& w = ws[rng.below(4)];
    const auto c = compute_share_coefficients(prior, w);
    const double closed = objective(optimal_proportions(prior, w).q, c);
    const double brute = objective(brute_force_proportions(prior, w, 0.01).q, c);
    EXPECT_LE(closed, brute + 1e-9);
    EXPECT_LE(brute, closed * 1.01);
  }
}

TEST(Optimizer, BruteForceSmallLattice) {
  // Point mass 0.5: q = (1/4, 1/2, 1/4) lies on the 0.25 lattice.
  const auto vp = brute_force_proportions(PriorPMF::point_mass(0.5), DesignWeights{0, 0, 1}, 0.25);
  EXPECT_EQ(vp.q, (std::vector<double>{0.25, 0.5, 0.25}));
  EXPECT_THROW(brute_force_proportions(PriorPMF::point_mass(0.5), DesignWeights{}, 0.3), InvalidArgument);
  EXPECT_DOUBLE_EQ(std::round(simplex_grid_size(3, 0.5)), 6.0);
}

TEST(Optimizer, LargePriorUsesMirrorDescentOracle) {
  const PriorPMF prior = discretize_prior(PriorSpec::truncated_normal(0.5, 0.1));
  ASSERT_GT(prior.size(), 50u);
  EXPECT_THROW(brute_force_proportions(prior, DesignWeights{0, 0, 1}, 0.005), GridTooLarge);

  const auto c = compute_share_coefficients(prior, DesignWeights{0, 0, 1});
  const auto closed = optimal_shares(c.d);
  const auto md = mirror_descent(c.d, 20000);
  const double f_closed = objective(closed, c);
  const double f_md = objective(md, c);
  EXPECT_LE(f_closed, f_md * (1.0 + 1e-12));
  EXPECT_LT((f_md - f_closed) / f_closed, 1e-6);
  for (std::size_t k = 0; k < closed.size(); ++k) EXPECT_NEAR(md[k], closed[k], 1e-4);
}

TEST(Optimizer, KnownChangePointVariancesMatchExactMatrix) {
  RandomStream rng(stream_key({26}));
  for (int trial = 0; trial < 200; ++trial) {
    const double g = (1 + rng.below(9)) / 10.0;
    int c[3];
    for (int& v : c) v = 1 + static_cast<int>(rng.below(16));
    const int n = c[0] + c[1] + c[2];
    const double s2 = 0.5 + rng.uniform();
    const TimeCount design[] = {{0.0, c[0]}, {g, c[1]}, {1.0, c[2]}};
    const auto exact = exact_variances(design, g, s2);
    const auto known = known_cp_variances(double(c[0]) / n, double(c[1]) / n, double(c[2]) / n, g, n, s2);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(known[i] / exact[i], 1.0, 1e-9);
  }
}

TEST(Optimizer, SurrogateReducesToKnownChangePoint) {
  const double g = 0.3;
  const std::vector<double> q{0.35, 0.5, 0.15};
  const auto s = surrogate_variances(q, PriorPMF::point_mass(g), 20, 0.7);
  const auto k = known_cp_variances(q[0], q[1], q[2], g, 20, 0.7);
  EXPECT_NEAR(s.v0, k[0], 1e-12 * k[0]);
  EXPECT_NEAR(s.v1, k[1], 1e-12 * k[1]);
  EXPECT_NEAR(s.v2, k[2], 1e-12 * k[2]);
  static_assert(SurrogateVariances::excludes_constants);
}

TEST(Optimizer, SurrogateWeightedEqualsObjective) {
  RandomStream rng(stream_key({27}));
  for (int trial = 0; trial < 30; ++trial) {
    const auto prior = random_prior(rng, 1 + rng.below(4));
    const DesignWeights w{rng.uniform(), rng.uniform(), rng.uniform()};
    const auto c = compute_share_coefficients(prior, w);
    const auto q = optimal_shares(c.d);
    const auto v = surrogate_variances(q, prior, 12, 2.0);
    EXPECT_NEAR(v.weighted(w) / surrogate_objective(q, c.d, 12, 2.0), 1.0, 1e-12);
  }
}

TEST(Optimizer, DoublingBudgetHalvesVariances) {
  const PriorPMF prior({0.3, 0.5}, {1, 3});
  const auto q = optimal_proportions(prior, DesignWeights{}).q;
  const auto a = surrogate_variances(q, prior, 10, 1.0);
  const auto b = surrogate_variances(q, prior, 20, 1.0);
  EXPECT_NEAR(b.v0, a.v0 / 2, 1e-14);
  EXPECT_NEAR(b.v1, a.v1 / 2, 1e-12);
  EXPECT_NEAR(b.v2, a.v2 / 2, 1e-12);
  const std::vector<double> t{0.0, 0.3, 0.5, 1.0}, m1{3, 3, 2, 2}, m2{6, 6, 4, 4};
  const auto e1 = exact_variances_weighted(t, m1, 0.4, 1.0);
  const auto e2 = exact_variances_weighted(t, m2, 0.4, 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(e2[i], e1[i] / 2, 1e-12 * e1[i]);
}

TEST(Optimizer, ZeroProportion) {
  const PriorPMF prior = PriorPMF::point_mass(0.4);
  const std::vector<double> q{0.5, 0.5, 0.0};
  EXPECT_THROW(surrogate_variances(q, prior, 10, 1.0), ZeroProportion);
  const auto c = compute_share_coefficients(prior, DesignWeights{});
  EXPECT_TRUE(std::isinf(surrogate_objective(q, c.d, 10)));
  const auto u = surrogate_variances_unchecked(q, prior, 10, 1.0);
  EXPECT_TRUE(std::isfinite(u.v0));
  EXPECT_TRUE(std::isinf(u.v2));
  EXPECT_THROW(surrogate_variances(std::vector<double>{0.5, 0.5}, prior, 10, 1.0), InvalidArgument);
}

TEST(Optimizer, ExactVariancesRankDeficient) {
  const TimeCount early[] = {{0.0, 3}, {0.2, 3}, {0.4, 4}};
  EXPECT_THROW(exact_variances(early, 0.5, 1.0), RankDeficient);
  EXPECT_NO_THROW(exact_variances(early, 0.3, 1.0));
}
