#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "npmle/analysis.hpp"
#include "npmle/density.hpp"
#include "npmle/error.hpp"
#include "npmle/npmle.hpp"

using namespace npmle;

namespace {

const KernelSpec kGauss = KernelSpec::gaussian(-1, 1);
const KernelSpec kWide = KernelSpec::gaussian(-2, 2);
const KernelSpec kPois = KernelSpec::poisson(0.5, 4);

DiscreteMixing random_mixing(std::mt19937_64& rng, int atoms, int d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi), w(0.05, 1.0);
  std::vector<Point> a;
  std::vector<double> ws;
  double tot = 0;
  for (int j = 0; j < atoms; ++j) {
    Point p(d);
    for (double& v : p) v = u(rng);
    a.push_back(p);
    ws.push_back(w(rng));
    tot += ws.back();
  }
  for (double& v : ws) v /= tot;
  return DiscreteMixing(a, ws);
}

// Quadrature moments of the direct score under f_g0.
std::pair<double, double> score_moments(const ScoreCoefficients& sc, const DiscreteMixing& g,
                                        const DiscreteMixing& g0, const KernelSpec& k) {
  QuadratureScheme scheme;
  const auto grid = pair_grid(g, g0, k, scheme.refined());
  double m1 = 0, m2 = 0;
  grid.for_each([&](std::span<const double> x, double w) {
    const double f0 = mixture_density(g0, k, x);
    const double s = (mixture_density(g, k, x) / f0 - 1) / sc.chi;
    m1 += w * f0 * s;
    m2 += w * f0 * s * s;
  });
  return {m1, m2};
}

}  // namespace

TEST(Score, ExplicitIdentityPointMass) {
  const DiscreteMixing g = DiscreteMixing::point_mass({1.0});
  const DiscreteMixing g0 = DiscreteMixing::point_mass({0.0});
  const auto sc = score_coefficients(g, g0, kGauss, Point{0.0});
  EXPECT_NEAR(sc.chi, std::sqrt(std::exp(1.0) - 1), 1e-9);
  EXPECT_NEAR(sc.coeffs.at(MultiIndex({1})), 0.7628740, 5e-8);
  EXPECT_NEAR(sc.coeffs.at(MultiIndex({2})), 0.3814370, 5e-8);
  EXPECT_THROW(score_coefficients(g0, g0, kGauss, Point{0.0}), InvalidArgument);
  EXPECT_THROW(score_coefficients(g, g0, kGauss, Point{0.5}), InvalidArgument);
}

TEST(Score, ExplicitIdentityRandom) {
  std::mt19937_64 rng(1);
  const DiscreteMixing g0 = DiscreteMixing::point_mass({0.0});
  for (int t = 0; t < 20; ++t) {
    const auto g = random_mixing(rng, 3, 1, -1, 1);
    const auto sc = score_coefficients(g, g0, kGauss, Point{0.0}, 30);
    // m_k / (k! sqrt(Σ_j m_j²/j!)), the series summed far out
    double norm = 0;
    std::vector<double> m(200, 0.0);
    for (int k = 1; k < 200; ++k) {
      for (std::size_t j = 0; j < g.size(); ++j) m[k] += g.weight(j) * std::pow(g.atom(j)[0], k);
      norm += m[k] * m[k] / std::tgamma(k + 1.0);
    }
    for (int k = 1; k <= 30; ++k) {
      const double want = m[k] / std::tgamma(k + 1.0) / std::sqrt(norm);
      EXPECT_NEAR(sc.coeffs.at(MultiIndex({k})), want, 1e-10 + 1e-8 * std::abs(want)) << k;
    }
  }
}

TEST(Score, TruncatedMatchesDirect) {
  const DiscreteMixing g({{-0.7}, {0.4}, {1.0}}, {0.2, 0.5, 0.3});
  const DiscreteMixing g0({{0.0}, {0.6}}, {0.5, 0.5});
  const auto sc = score_coefficients(g, g0, kGauss, Point{0.0}, 40);
  for (double x = -4; x <= 4; x += 0.25) {
    const auto v = score_eval(sc, g, g0, kGauss, Point{x});
    EXPECT_NEAR(v.truncated, v.direct, 1e-5 * (1 + std::abs(v.direct))) << x;
  }
  const DiscreteMixing gp({{1.0}, {2.5}}, {0.5, 0.5});
  const DiscreteMixing gp0 = DiscreteMixing::point_mass({1.5});
  const auto sp = score_coefficients(gp, gp0, kPois, Point{1.5}, 40);
  for (int x = 0; x <= 10; ++x) {
    const auto v = score_eval(sp, gp, gp0, kPois, Point{double(x)});
    EXPECT_NEAR(v.truncated, v.direct, 1e-5 * (1 + std::abs(v.direct))) << x;
  }
}

TEST(Score, CenteredAndNormalized) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto g = random_mixing(rng, 1 + t % 4, 1, -1, 1);
    const auto g0 = random_mixing(rng, 1 + t % 3, 1, -1, 1);
    ScoreCoefficients sc;
    sc.chi = std::sqrt(chi_square(g, g0, kGauss));
    const auto [m1, m2] = score_moments(sc, g, g0, kGauss);
    EXPECT_NEAR(m1, 0.0, 1e-6);
    EXPECT_NEAR(m2, 1.0, 1e-4);
  }
}

TEST(Score, WeightedNormSettlesAsTailShrinks) {
  const DiscreteMixing g({{-0.5}, {0.8}}, {0.5, 0.5});
  const DiscreteMixing g0({{0.0}, {0.5}}, {0.5, 0.5});
  double prev_tail = INFINITY, prev_norm = 0;
  for (int kmax : {5, 10, 20, 40}) {
    const auto sc = score_coefficients(g, g0, kGauss, Point{0.0}, kmax);
    EXPECT_LT(sc.tail, prev_tail);
    const double w = sc.weighted_norm_sq(kGauss);
    EXPECT_GE(w, prev_norm);
    EXPECT_LT(w, 1e3);
    prev_tail = sc.tail;
    prev_norm = w;
  }
  EXPECT_LT(prev_tail, 1e-20);
}

TEST(Wasserstein, Examples) {
  EXPECT_NEAR(wasserstein1(DiscreteMixing::point_mass({0.3}), DiscreteMixing::point_mass({0.7})), 0.4, 1e-15);
  const DiscreteMixing two({{0.0}, {1.0}}, {0.5, 0.5});
  EXPECT_NEAR(wasserstein1(two, DiscreteMixing::point_mass({0.5})), 0.5, 1e-15);
  EXPECT_NEAR(wasserstein1_transport(two, DiscreteMixing::point_mass({0.5})), 0.5, 1e-15);
  const DiscreteMixing a({{0.0, 0.0}, {3.0, 4.0}}, {0.5, 0.5});
  const DiscreteMixing b({{0.0, 0.0}}, {1.0});
  EXPECT_NEAR(wasserstein1(a, b), 2.5, 1e-14);
  EXPECT_THROW(wasserstein1(two, a), InvalidArgument);
}

TEST(Wasserstein, QuantileAgreesWithTransport) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto g1 = random_mixing(rng, 1 + t % 37, 1, -3, 3);
    const auto g2 = random_mixing(rng, 1 + (7 * t) % 29, 1, -3, 3);
    EXPECT_NEAR(wasserstein1(g1, g2), wasserstein1_transport(g1, g2), 1e-10);
  }
}

TEST(Wasserstein, MetricAxioms) {
  std::mt19937_64 rng(5);
  for (int d : {1, 2, 3}) {
    for (int t = 0; t < 30; ++t) {
      const auto a = random_mixing(rng, 1 + t % 9, d, -1, 1);
      const auto b = random_mixing(rng, 2 + t % 7, d, -1, 1);
      const auto c = random_mixing(rng, 3 + t % 5, d, -1, 1);
      EXPECT_NEAR(wasserstein1(a, a), 0.0, 1e-14);
      EXPECT_NEAR(wasserstein1(a, b), wasserstein1(b, a), 1e-12);
      EXPECT_LE(wasserstein1(a, c), wasserstein1(a, b) + wasserstein1(b, c) + 1e-12);
    }
  }
}

TEST(Wasserstein, LargeInstances) {
  std::mt19937_64 rng(6);
  const auto a = random_mixing(rng, 200, 2, -1, 1);
  const auto b = random_mixing(rng, 150, 2, -1, 1);
  const double w = wasserstein1(a, b);
  EXPECT_GT(w, 0);
  // Lower bound by the distance between means.
  const auto ma = a.mean(), mb = b.mean();
  EXPECT_GE(w, std::hypot(ma[0] - mb[0], ma[1] - mb[1]) - 1e-12);
  EXPECT_THROW(wasserstein1(random_mixing(rng, 201, 2, -1, 1), b), InvalidArgument);
}

TEST(AsyGap, Basics) {
  const DiscreteMixing g0({{-0.5}, {0.5}}, {0.6, 0.4});
  const Dataset data = sample(g0, kGauss, 500, 1);
  EXPECT_NEAR(asy_gap(data, g0, g0, kGauss), 0.0, 1e-12);
  const auto fit = solve(data, kGauss);
  const double a = asy_gap(data, fit.g, g0, kGauss);
  std::vector<Point> atoms = fit.g.atoms();
  std::vector<double> w;
  for (std::size_t j = 0; j < fit.g.size(); ++j) w.push_back(fit.g.weight(j));
  std::reverse(atoms.begin(), atoms.end());
  std::reverse(w.begin(), w.end());
  EXPECT_NEAR(asy_gap(data, DiscreteMixing(atoms, w), g0, kGauss), a, 1e-9 * (1 + a));
}
