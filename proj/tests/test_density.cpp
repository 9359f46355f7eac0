#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "npmle/density.hpp"
#include "npmle/error.hpp"
#include "npmle/rng.hpp"

using namespace npmle;

namespace {

const KernelSpec kGauss = KernelSpec::gaussian(-1, 1);
const KernelSpec kPois = KernelSpec::poisson(0.5, 4);

DiscreteMixing random_mixing(std::mt19937_64& rng, int atoms, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi), w(0.05, 1.0);
  std::vector<Point> a;
  std::vector<double> ws;
  double tot = 0;
  for (int j = 0; j < atoms; ++j) {
    a.push_back({u(rng)});
    ws.push_back(w(rng));
    tot += ws.back();
  }
  for (double& v : ws) v /= tot;
  return DiscreteMixing(a, ws);
}

double phi(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2 * M_PI); }
double pmf(double x, double lam) { return std::exp(x * std::log(lam) - lam - std::lgamma(x + 1)); }

// Oracle posterior mean, straight from Bayes' rule.
double bayes_mean(const DiscreteMixing& g, double x) {
  double num = 0, den = 0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double p = g.weight(j) * phi(x - g.atom(j)[0]);
    num += p * g.atom(j)[0];
    den += p;
  }
  return num / den;
}

}  // namespace

TEST(Density, MixtureExamples) {
  EXPECT_NEAR(mixture_density(DiscreteMixing::point_mass({0.0}), kGauss, Point{0.0}), 0.3989423, 1e-7);
  const DiscreteMixing sym({{-1.0}, {1.0}}, {0.5, 0.5});
  EXPECT_NEAR(mixture_density(sym, kGauss, Point{0.0}), 0.2419707, 1e-7);
  const DiscreteMixing p({{1.0}, {2.0}}, {0.5, 0.5});
  EXPECT_NEAR(mixture_density(p, kPois, Point{0.0}), 0.5 * std::exp(-1) + 0.5 * std::exp(-2), 1e-15);
  EXPECT_NEAR(mixture_density(p, kPois, Point{0.0}), 0.2516074, 1e-7);
  EXPECT_THROW(mixture_density(p, kPois, Point{-1.0}), InvalidArgument);
}

TEST(Density, LogLikelihoodExamples) {
  const Dataset one(1, {0.0});
  EXPECT_NEAR(log_likelihood(DiscreteMixing::point_mass({0.0}), kGauss, one), -0.9189385, 1e-7);
  const Dataset pd(1, {0.0, 1.0});
  EXPECT_NEAR(log_likelihood(DiscreteMixing::point_mass({1.0}), kPois, pd), -2.0, 1e-14);
  std::mt19937_64 rng(1);
  const auto g = random_mixing(rng, 3, -1, 1);
  const Dataset d(1, {0.3, -1.2, 2.5, 0.0});
  EXPECT_DOUBLE_EQ(log_likelihood(g, kGauss, d.repeated(2)), 2 * log_likelihood(g, kGauss, d));
}

TEST(Density, ChiSquareClosedForms) {
  for (double th : {0.25, 0.5, 1.0}) {
    const double chi = chi_square(DiscreteMixing::point_mass({th}), DiscreteMixing::point_mass({0.0}), kGauss);
    EXPECT_NEAR(chi, std::exp(th * th) - 1, 1e-8);
  }
  EXPECT_NEAR(chi_square(DiscreteMixing::point_mass({1.0}), DiscreteMixing::point_mass({0.0}), kGauss),
              1.7182818, 1e-7);
  EXPECT_NEAR(chi_square(DiscreteMixing::point_mass({2.0}), DiscreteMixing::point_mass({1.0}), kPois),
              std::exp(1.0) - 1, 1e-8);
  EXPECT_NEAR(chi_square(DiscreteMixing::point_mass({3.0}), DiscreteMixing::point_mass({1.5}), kPois),
              std::exp(1.5 * 1.5 / 1.5) - 1, 1e-8);
  const auto g0 = DiscreteMixing({{-0.5}, {0.5}}, {0.6, 0.4});
  EXPECT_NEAR(chi_square(g0, g0, kGauss), 0.0, 1e-12);
}

TEST(Density, HellingerClosedForms) {
  // H^2 = ∫(√f − √f0)^2 = 2(1 − BC)
  const double th = 0.8;
  const auto dg = divergences(DiscreteMixing::point_mass({th}), DiscreteMixing::point_mass({0.0}), kGauss);
  EXPECT_NEAR(dg.hellinger_sq, 2 * (1 - std::exp(-th * th / 8)), 1e-10);
  const auto dp = divergences(DiscreteMixing::point_mass({3.0}), DiscreteMixing::point_mass({1.0}), kPois);
  const double bc = std::exp(-0.5 * std::pow(std::sqrt(3.0) - 1.0, 2));
  EXPECT_NEAR(dp.hellinger_sq, 2 * (1 - bc), 1e-10);
}

TEST(Density, ChiSquareDominatesHellinger) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto g = random_mixing(rng, 1 + rep % 4, -1, 1);
    const auto g0 = random_mixing(rng, 1 + rep % 3, -1, 1);
    const auto dv = divergences(g, g0, kGauss);
    EXPECT_GE(dv.hellinger_sq, 0.0);
    EXPECT_GE(dv.chi_square, dv.hellinger_sq);
    const auto p = random_mixing(rng, 2, 0.5, 4), p0 = random_mixing(rng, 2, 0.5, 4);
    const auto dp = divergences(p, p0, kPois);
    EXPECT_GE(dp.chi_square, dp.hellinger_sq);
  }
}

TEST(Density, RefinementIsStable) {
  const auto g0 = DiscreteMixing({{-0.5}, {0.5}}, {0.6, 0.4});
  const auto g = DiscreteMixing({{-0.45}, {0.1}, {0.55}}, {0.5, 0.1, 0.4});
  const QuadratureScheme s;
  const double a = divergences_at(g, g0, kGauss, s).chi_square;
  const double b = divergences_at(g, g0, kGauss, s.refined()).chi_square;
  EXPECT_LT(std::abs(a - b), 1e-6 * b);
  const auto p0 = DiscreteMixing({{1.0}, {3.0}}, {0.5, 0.5});
  const auto p = DiscreteMixing({{1.2}, {2.9}}, {0.45, 0.55});
  const double c = divergences_at(p, p0, kPois, s).chi_square;
  const double d = divergences_at(p, p0, kPois, s.refined()).chi_square;
  EXPECT_LT(std::abs(c - d), 1e-6 * d);
}

TEST(Density, SecondMomentClosedForm) {
  // Oracle: brute-force quadrature of q_k^2 p_θ.
  const Rule1D gh = gauss_hermite_prob(60);
  for (int k = 0; k <= 8; ++k) {
    const double th0 = 0.2, th = -0.7;
    double acc = 0;
    for (std::size_t i = 0; i < gh.size(); ++i) {
      const double q = orth_poly_eval(kGauss, Point{th0}, MultiIndex({k}), Point{gh.nodes[i] + th});
      acc += gh.weights[i] * q * q;
    }
    EXPECT_NEAR(std::exp(log_poly_second_moment(kGauss, 0, th0, th, k)) / acc, 1.0, 1e-10);
  }
  for (int k = 0; k <= 8; ++k) {
    const double th0 = 1.5, th = 3.2;
    double acc = 0;
    for (int x = 0; x < 200; ++x) {
      const double q = orth_poly_eval(kPois, Point{th0}, MultiIndex({k}), Point{double(x)});
      acc += pmf(x, th) * q * q;
    }
    EXPECT_NEAR(std::exp(log_poly_second_moment(kPois, 0, th0, th, k)) / acc, 1.0, 1e-10);
  }
}

TEST(Density, BoundsExamples) {
  const auto g0 = DiscreteMixing({{-0.5}, {0.5}}, {0.6, 0.4});
  const auto same = chi_square_bounds(g0, g0, kGauss, Point{-0.5}, 10);
  EXPECT_EQ(same.lower, 0.0);
  EXPECT_EQ(same.upper_partial, 0.0);
  EXPECT_NEAR(same.C0_bound, 1 / 0.6, 1e-12);
  for (double th : {0.3, 0.9}) {
    const auto b = chi_square_bounds(DiscreteMixing::point_mass({th}), DiscreteMixing::point_mass({0.0}),
                                     kGauss, Point{0.0}, 2);
    EXPECT_NEAR(b.lower, th * th, 1e-14);
    EXPECT_LE(b.lower, std::exp(th * th) - 1);
  }
  EXPECT_THROW(chi_square_bounds(g0, g0, kGauss, Point{0.0}, 10), InvalidArgument);
  EXPECT_THROW(chi_square_bounds(g0, g0, kGauss, Point{0.5}, 3), InvalidArgument);
}

TEST(Density, DivergenceSandwich) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const bool pois = rep % 2 == 1;
    const KernelSpec& k = pois ? kPois : kGauss;
    const double lo = pois ? 0.5 : -1.0, hi = pois ? 4.0 : 1.0;
    const auto g0 = random_mixing(rng, 1 + rep % 3, lo, hi);
    const auto g = random_mixing(rng, 1 + rep % 5, lo, hi);
    const Point th0 = default_theta0(g0);
    const auto b = chi_square_bounds(g, g0, k, th0, 40);
    const double chi = chi_square(g, g0, k);
    EXPECT_LE(b.lower, chi * (1 + 1e-9) + 1e-12) << rep;
    EXPECT_LE(chi, b.upper_partial + b.tail_estimate + 1e-8) << rep;
  }
}

TEST(Density, SeriesExpansionMatchesDirect) {
  // Σ_{|α|<=40} m_{α,g} q_α(x)/α! against f_g(x)/p_θ0(x) − 1, evaluated directly.
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto g = random_mixing(rng, 3, -1, 1);
    const double th0 = 0.1;
    for (double t = -5; t <= 5; t += 0.5) {
      const double x = th0 + t;
      double series = 0;
      for (int k = 1; k <= 40; ++k) {
        series += moment(g, Point{th0}, MultiIndex({k})) *
                  orth_poly_eval(kGauss, Point{th0}, MultiIndex({k}), Point{x}) / std::tgamma(k + 1.0);
      }
      double direct = 0;
      for (std::size_t j = 0; j < g.size(); ++j) direct += g.weight(j) * phi(x - g.atom(j)[0]);
      direct = direct / phi(x - th0) - 1;
      EXPECT_NEAR(series, direct, 1e-6 * std::max(1.0, std::abs(direct)));
    }
  }
  for (int rep = 0; rep < 20; ++rep) {
    const auto g = random_mixing(rng, 3, 1.0, 3.0);
    const double th0 = 2.0;
    for (int x = 0; x <= 30; ++x) {
      double series = 0;
      for (int k = 1; k <= 40; ++k) {
        series += moment(g, Point{th0}, MultiIndex({k})) *
                  orth_poly_eval(kPois, Point{th0}, MultiIndex({k}), Point{double(x)}) / std::tgamma(k + 1.0);
      }
      double direct = 0;
      for (std::size_t j = 0; j < g.size(); ++j) direct += g.weight(j) * pmf(x, g.atom(j)[0]);
      direct = direct / pmf(x, th0) - 1;
      EXPECT_NEAR(series, direct, 1e-6 * std::max(1.0, std::abs(direct)));
    }
  }
}

TEST(Density, PosteriorMeanExamples) {
  EXPECT_DOUBLE_EQ(posterior_mean(DiscreteMixing::point_mass({0.4}), kGauss, Point{3.0})[0], 0.4);
  const DiscreteMixing g({{0.0}, {1.0}}, {0.5, 0.5});
  EXPECT_NEAR(posterior_mean(g, kGauss, Point{0.5})[0], 0.5, 1e-15);
  EXPECT_NEAR(posterior_mean(g, kGauss, Point{0.0})[0], phi(1) / (phi(0) + phi(1)), 1e-15);
  EXPECT_NEAR(posterior_mean(g, kGauss, Point{0.0})[0], 0.3775407, 1e-7);
}

TEST(Density, PosteriorMseExamples) {
  const auto g0 = DiscreteMixing::point_mass({0.0});
  EXPECT_NEAR(posterior_mean_mse(g0, g0, kGauss), 0.0, 1e-15);
  EXPECT_NEAR(posterior_mean_mse(DiscreteMixing::point_mass({0.1}), g0, kGauss), 0.01, 1e-12);
}

TEST(Density, PosteriorMseMatchesMonteCarlo) {
  const auto g0 = DiscreteMixing({{-0.5}, {0.5}}, {0.6, 0.4});
  const auto g = DiscreteMixing({{-0.7}, {0.0}, {0.6}}, {0.4, 0.3, 0.3});
  const double exact = posterior_mean_mse(g, g0, kGauss);
  CounterRng rng(99);
  const int n = 1000000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double th = rng.uniform() < 0.6 ? -0.5 : 0.5;
    const double x = th + rng.normal();
    const double e = bayes_mean(g, x) - bayes_mean(g0, x);
    s += e * e;
    s2 += e * e * e * e;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_LE(std::abs(mean - exact), 3 * se);
}

TEST(Density, PluginFunctionals) {
  EXPECT_DOUBLE_EQ(plugin_functional(DiscreteMixing::point_mass({0.3}), kGauss, {FunctionalKind::Mean}), 0.3);
  EXPECT_NEAR(plugin_functional(DiscreteMixing::point_mass({1.0}), kPois, {FunctionalKind::PointMass, 0, 0.0}),
              std::exp(-1.0), 1e-15);
  const DiscreteMixing sym({{-1.0}, {1.0}}, {0.5, 0.5});
  EXPECT_NEAR(plugin_functional(sym, kGauss, {FunctionalKind::CdfIndicator, 0, 0.0}), 0.5, 1e-15);
  EXPECT_THROW(plugin_functional(sym, kGauss, {FunctionalKind::PointMass, 0, 0.0}), InvalidArgument);
  // Mean functional equals the mixing mean; CDF against a direct sum.
  std::mt19937_64 rng(6);
  const auto g = random_mixing(rng, 4, -1, 1);
  EXPECT_NEAR(plugin_functional(g, kGauss, {FunctionalKind::Mean}), g.mean()[0], 1e-15);
  const auto p = random_mixing(rng, 3, 0.5, 4);
  double cdf = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    for (int x = 0; x <= 2; ++x) cdf += p.weight(j) * pmf(x, p.atom(j)[0]);
  }
  EXPECT_NEAR(plugin_functional(p, kPois, {FunctionalKind::CdfIndicator, 0, 2.5}), cdf, 1e-14);
}

TEST(Density, EnvelopeDominatesError) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(-4, 4);
  int checked = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto g0 = random_mixing(rng, 1 + rep % 2, -1, 1);
    const auto g = random_mixing(rng, 1 + rep % 4, -1, 1);
    const int kmax = 2 * static_cast<int>(g0.size()) + 10;
    for (int i = 0; i < 10; ++i) {
      const double x = ux(rng);
      const auto env = posterior_error_envelope(g, g0, kGauss, Point{x}, kmax);
      const double err = std::abs(bayes_mean(g, x) - bayes_mean(g0, x));
      EXPECT_LE(err, env.value * (1 + 1e-12)) << rep << " x=" << x;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 200);
}

TEST(Density, EnvelopeDegenerateAndPoisson) {
  const auto g0 = DiscreteMixing({{-0.5}, {0.5}}, {0.6, 0.4});
  EXPECT_EQ(posterior_error_envelope(g0, g0, kGauss, Point{0.3}, 14).value, 0.0);
  const auto p0 = DiscreteMixing({{1.0}, {3.0}}, {0.5, 0.5});
  const auto p = DiscreteMixing({{1.1}, {2.5}, {3.5}}, {0.5, 0.2, 0.3});
  for (int x = 0; x <= 30; ++x) {
    const auto env = posterior_error_envelope(p, p0, kPois, Point{double(x)}, 14);
    EXPECT_TRUE(std::isfinite(env.value)) << x;
    EXPECT_GT(env.value, 0.0);
    const Point a = posterior_mean(p, kPois, Point{double(x)});
    const Point b = posterior_mean(p0, kPois, Point{double(x)});
    EXPECT_LE(std::abs(a[0] - b[0]), env.value);
  }
}
