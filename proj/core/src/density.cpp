#include "npmle/density.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "npmle/error.hpp"
#include "npmle/numeric.hpp"

namespace npmle {

MixtureEval::MixtureEval(const DiscreteMixing& g, const KernelSpec& kernel) : g_(g), kernel_(kernel) {
  if (g.size() == 0) throw InvalidArgument("mixture: empty mixing distribution");
  if (g.dim() != kernel.d) throw InvalidArgument("mixture: dimension mismatch");
  const std::size_t J = g.size();
  const int d = kernel.d;
  log_w_.resize(J);
  log_theta_.assign(J * d, 0.0);
  theta_sum_.assign(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    log_w_[j] = g.weight(j) > 0.0 ? std::log(g.weight(j)) : kNegInf;
    for (int l = kernel.b; l < d; ++l) {
      log_theta_[j * d + l] = std::log(g.atom(j)[l]);
      theta_sum_[j] += g.atom(j)[l];
    }
  }
}

double MixtureEval::poisson_const(const double* x) const {
  double c = -kernel_.b * kLogSqrt2Pi;
  for (int l = kernel_.b; l < kernel_.d; ++l) c -= std::lgamma(x[l] + 1.0);
  return c;
}

double MixtureEval::log_atom(std::size_t j, const double* x, double c) const {
  const double* th = g_.atom(j).data();
  double acc = c - theta_sum_[j];
  for (int l = 0; l < kernel_.b; ++l) {
    const double t = x[l] - th[l];
    acc -= 0.5 * t * t;
  }
  for (int l = kernel_.b; l < kernel_.d; ++l) acc += x[l] * log_theta_[j * kernel_.d + l];
  return acc;
}

double MixtureEval::log_density(const double* x) const {
  const double c = poisson_const(x);
  double hi = kNegInf;
  double s = 0.0;
  for (std::size_t j = 0; j < g_.size(); ++j) {
    const double v = log_w_[j] + log_atom(j, x, c);
    if (v == kNegInf) continue;
    if (v <= hi) {
      s += std::exp(v - hi);
    } else {
      s = s * std::exp(hi - v) + 1.0;
      hi = v;
    }
  }
  return hi == kNegInf ? kNegInf : hi + std::log(s);
}

double MixtureEval::posterior(const double* x, std::span<double> pi) const {
  const double c = poisson_const(x);
  double hi = kNegInf;
  for (std::size_t j = 0; j < g_.size(); ++j) {
    pi[j] = log_w_[j] + log_atom(j, x, c);
    hi = std::max(hi, pi[j]);
  }
  if (hi == kNegInf) throw NumericalError("posterior: mixture density vanishes");
  CompensatedSum s;
  for (std::size_t j = 0; j < g_.size(); ++j) {
    pi[j] = std::exp(pi[j] - hi);
    s.add(pi[j]);
  }
  const double total = s.value();
  for (std::size_t j = 0; j < g_.size(); ++j) pi[j] /= total;
  return hi + std::log(total);
}

double log_mixture_density(const DiscreteMixing& g, const KernelSpec& kernel,
                           std::span<const double> x) {
  kernel.check_observation(x);
  return MixtureEval(g, kernel).log_density(x.data());
}

double mixture_density(const DiscreteMixing& g, const KernelSpec& kernel, std::span<const double> x) {
  return std::exp(log_mixture_density(g, kernel, x));
}

double log_likelihood(const DiscreteMixing& g, const KernelSpec& kernel, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("log_likelihood: empty dataset");
  if (data.dim() != kernel.d) throw InvalidArgument("log_likelihood: dimension mismatch");
  const MixtureEval eval(g, kernel);
  CompensatedSum acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = eval.log_density(data.row_ptr(i));
    if (v == kNegInf) {
      throw NumericalError("log_likelihood: f_g vanishes at observation " + std::to_string(i + 1));
    }
    acc.add(v);
  }
  return acc.value();
}

SampleSpaceGrid pair_grid(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                          const QuadratureScheme& scheme) {
  const int d = kernel.d;
  std::vector<double> lo(kernel.theta_lo);
  std::vector<double> hi(kernel.theta_hi);
  for (int l = 0; l < d; ++l) {
    double gmin = g.atom(0)[l], gmax = gmin, hmin = g0.atom(0)[l], hmax = hmin;
    for (const auto& a : g.atoms()) {
      gmin = std::min(gmin, a[l]);
      gmax = std::max(gmax, a[l]);
    }
    for (const auto& a : g0.atoms()) {
      hmin = std::min(hmin, a[l]);
      hmax = std::max(hmax, a[l]);
    }
    if (kernel.is_gaussian(l)) {
      // f_g^2/f_g0 peaks near 2θ − θ0.
      lo[l] = std::min({lo[l], gmin, hmin, 2.0 * gmin - hmax});
      hi[l] = std::max({hi[l], gmax, hmax, 2.0 * gmax - hmin});
    } else {
      hi[l] = std::max({hi[l], gmax, hmax, gmax * gmax / hmin});
    }
  }
  return SampleSpaceGrid(kernel, scheme, lo, hi);
}

namespace {

// log|e^r − 1|
double log_abs_expm1(double r) {
  if (r > 30.0) return r + std::log1p(-std::exp(-r));
  return std::log(std::abs(std::expm1(r)));
}

void check_refinement(double a, double b, const char* what) {
  if (!std::isfinite(a) || !std::isfinite(b) || std::abs(a - b) > 1e-6 * std::max(std::abs(a), std::abs(b)) + 1e-12) {
    throw NumericalError(std::string(what) + ": quadrature refinement disagrees (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

Divergences divergences_at(const DiscreteMixing& g, const DiscreteMixing& g0,
                           const KernelSpec& kernel, const QuadratureScheme& scheme) {
  kernel.validate();
  g.check_in(kernel);
  g0.check_in(kernel);
  const MixtureEval fg(g, kernel);
  const MixtureEval f0(g0, kernel);
  const SampleSpaceGrid grid = pair_grid(g, g0, kernel, scheme);
  CompensatedSum chi;
  CompensatedSum hel;
  bool f0_vanishes = false;
  grid.for_each([&](std::span<const double> x, double w) {
    const double lg = fg.log_density(x.data());
    const double l0 = f0.log_density(x.data());
    if (l0 == kNegInf) {
      if (lg != kNegInf) f0_vanishes = true;
      return;
    }
    if (lg == kNegInf) {
      chi.add(w * std::exp(l0));
      hel.add(w * std::exp(l0));
      return;
    }
    const double r = lg - l0;
    if (r == 0.0) return;
    const double lw = std::log(w);
    chi.add(std::exp(lw + l0 + 2.0 * log_abs_expm1(r)));
    hel.add(std::exp(lw + l0 + 2.0 * log_abs_expm1(0.5 * r)));
  });
  if (f0_vanishes) throw NumericalError("chi_square: f_g0 vanishes where f_g does not");
  return {std::max(0.0, chi.value()), std::max(0.0, hel.value())};
}

Divergences divergences(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                        const QuadratureScheme& scheme) {
  const Divergences base = divergences_at(g, g0, kernel, scheme);
  const Divergences fine = divergences_at(g, g0, kernel, scheme.refined());
  check_refinement(base.chi_square, fine.chi_square, "chi_square");
  check_refinement(base.hellinger_sq, fine.hellinger_sq, "hellinger");
  return fine;
}

double chi_square(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                  const QuadratureScheme& scheme) {
  return divergences(g, g0, kernel, scheme).chi_square;
}

double log_poly_second_moment(const KernelSpec& kernel, int coord, double theta0_l, double theta_l,
                              int k) {
  double u = 0.0;
  double v = 1.0;
  if (kernel.is_gaussian(coord)) {
    u = theta_l - theta0_l;
  } else {
    u = theta_l / theta0_l - 1.0;
    v = theta_l / (theta0_l * theta0_l);
  }
  // E_θ[q_k^2] = Σ_j C(k,j)^2 j! u^{2(k−j)} v^j
  const double log_u = u == 0.0 ? kNegInf : std::log(std::abs(u));
  const double log_v = std::log(v);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(k) + 1);
  for (int j = 0; j <= k; ++j) {
    if (k - j > 0 && log_u == kNegInf) continue;
    const double log_binom = log_factorial(k) - log_factorial(j) - log_factorial(k - j);
    terms.push_back(2.0 * log_binom + log_factorial(j) + (k - j > 0 ? 2.0 * (k - j) * log_u : 0.0) +
                    j * log_v);
  }
  return log_sum_exp(terms);
}

Point default_theta0(const DiscreteMixing& g0) { return g0.atom(g0.heaviest_atom()); }

namespace {

std::size_t find_atom(const DiscreteMixing& g0, std::span<const double> theta0) {
  for (std::size_t j = 0; j < g0.size(); ++j) {
    bool same = true;
    for (int l = 0; l < g0.dim(); ++l) {
      const double scale = std::max(1.0, std::abs(theta0[l]));
      if (std::abs(g0.atom(j)[l] - theta0[l]) > 1e-12 * scale) same = false;
    }
    if (same) return j;
  }
  throw InvalidArgument("theta0 is not an atom of g0");
}

// log sup_{|α|=k} a_α = k log r with r = max_l V_l^{-1}.
double log_norm_ratio(const KernelSpec& kernel, std::span<const double> theta0) {
  double lr = kernel.b > 0 ? 0.0 : kNegInf;
  for (int l = kernel.b; l < kernel.d; ++l) lr = std::max(lr, -std::log(theta0[l]));
  return lr;
}

struct MomentDiffs {
  std::vector<MultiIndex> index;
  std::vector<double> diff;
};

MomentDiffs moment_diffs(const DiscreteMixing& g, const DiscreteMixing& g0,
                         std::span<const double> theta0, int k) {
  MomentDiffs out;
  out.index = multi_indices_of_order(g.dim(), k);
  out.diff.resize(out.index.size());
  for (std::size_t i = 0; i < out.index.size(); ++i) {
    const MultiIndex& a = out.index[i];
    CompensatedSum acc;
    for (std::size_t j = 0; j < g.size(); ++j) {
      double t = g.weight(j);
      for (int l = 0; l < g.dim(); ++l) t *= std::pow(g.atom(j)[l] - theta0[l], a[l]);
      acc.add(t);
    }
    for (std::size_t j = 0; j < g0.size(); ++j) {
      double t = -g0.weight(j);
      for (int l = 0; l < g.dim(); ++l) t *= std::pow(g0.atom(j)[l] - theta0[l], a[l]);
      acc.add(t);
    }
    out.diff[i] = acc.value();
  }
  return out;
}

// ||Δm_k||_F^2 / k! = Σ_{|α|=k} Δm_α^2 / α!
double frob_over_factorial(const MomentDiffs& m) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < m.index.size(); ++i) {
    acc.add(m.diff[i] * m.diff[i] * std::exp(-m.index[i].log_factorial()));
  }
  return acc.value();
}

double max_atom_distance(const DiscreteMixing& g, std::span<const double> theta0) {
  double M = 0.0;
  for (const auto& a : g.atoms()) {
    double acc = 0.0;
    for (int l = 0; l < g.dim(); ++l) acc += (a[l] - theta0[l]) * (a[l] - theta0[l]);
    M = std::max(M, std::sqrt(acc));
  }
  return M;
}

// Σ_{k > kmax} exp(log_term(k)) for a term that is eventually
// super-exponentially decaying; stops once terms are negligible.
template <class F>
double tail_series(int kmax, F log_term) {
  CompensatedSum acc;
  double prev = kNegInf;
  for (int k = kmax + 1; k < kmax + 100000; ++k) {
    const double lt = log_term(k);
    acc.add(std::exp(lt));
    const double total = acc.value();
    if (lt < prev && (total == 0.0 || lt < std::log(total) - 40.0)) break;
    prev = lt;
  }
  return acc.value();
}

}  // namespace

SeriesBound chi_square_bounds(const DiscreteMixing& g, const DiscreteMixing& g0,
                              const KernelSpec& kernel, std::span<const double> theta0, int kmax) {
  kernel.validate();
  g.check_in(kernel);
  g0.check_in(kernel);
  const std::size_t j0 = find_atom(g0, theta0);
  const int J = static_cast<int>(g0.size());
  if (kmax < 2 * J) throw InvalidArgument("chi_square_bounds: kmax must be at least 2J");
  if (kmax > kDefaultPolyCap) throw InvalidArgument("chi_square_bounds: kmax exceeds the polynomial cap");
  SeriesBound out;
  out.theta0.assign(theta0.begin(), theta0.end());
  out.kmax = kmax;
  out.C0_bound = 1.0 / g0.weight(j0);
  const int d = kernel.d;
  const double log_r = log_norm_ratio(kernel, theta0);

  CompensatedSum upper;
  std::vector<double> parts;
  for (int k = 1; k <= kmax; ++k) {
    const MomentDiffs m = moment_diffs(g, g0, theta0, k);
    double inf_norm = 0.0;
    for (double v : m.diff) inf_norm = std::max(inf_norm, std::abs(v));
    if (inf_norm > 0.0) {
      // min over |α|=k of a_α^2 / ∫ q_α^2 f_g0
      double best = std::numeric_limits<double>::infinity();
      for (const MultiIndex& a : m.index) {
        parts.clear();
        for (std::size_t j = 0; j < g0.size(); ++j) {
          double lp = std::log(g0.weight(j));
          for (int l = 0; l < d; ++l) {
            if (a[l] > 0) lp += log_poly_second_moment(kernel, l, theta0[l], g0.atom(j)[l], a[l]);
          }
          parts.push_back(lp);
        }
        const double log_ratio = 2.0 * log_poly_norm_const(kernel, theta0, a) - log_sum_exp(parts);
        best = std::min(best, log_ratio);
      }
      out.lower = std::max(out.lower, std::exp(best) * inf_norm * inf_norm);
    }
    upper.add(std::exp(k * log_r) * frob_over_factorial(m));
  }
  out.upper_partial = out.C0_bound * upper.value();

  // k > kmax: ||Δm_k||_F <= 2 M^k, and (via moment comparison)
  // ||Δm_k||_F^2 <= d^k k^2 (M+1)^{4Jk} Δ_g^2 when d <= 3.
  const double M = std::max(max_atom_distance(g, theta0), max_atom_distance(g0, theta0));
  double log_delta = kNegInf;
  if (d <= 3) {
    const MomentGap gap = moment_gap(g, g0, theta0, 2 * J);
    log_delta = gap.delta > 0.0 ? std::log(gap.delta) : kNegInf;
  }
  const double log_M = M > 0.0 ? std::log(M) : kNegInf;
  const double M_box = kernel.max_distance_from(theta0);
  out.tail_estimate =
      out.C0_bound * tail_series(kmax, [&](int k) {
        const double trivial = std::log(4.0) + 2.0 * k * log_M;
        const double mcl = k * std::log(static_cast<double>(d)) + 2.0 * std::log(static_cast<double>(k)) +
                           4.0 * J * k * std::log1p(M_box) + 2.0 * log_delta;
        return k * log_r + std::min(trivial, mcl) - log_factorial(k);
      });
  if (M == 0.0) out.tail_estimate = 0.0;
  out.tail_small = out.tail_estimate <= 1e-3 * std::max(out.upper_partial, 1e-12);
  return out;
}

Point posterior_mean(const DiscreteMixing& g, const KernelSpec& kernel, std::span<const double> x) {
  kernel.check_observation(x);
  const MixtureEval eval(g, kernel);
  std::vector<double> pi(g.size());
  eval.posterior(x.data(), pi);
  Point m(kernel.d, 0.0);
  for (int l = 0; l < kernel.d; ++l) {
    CompensatedSum acc;
    for (std::size_t j = 0; j < g.size(); ++j) acc.add(pi[j] * g.atom(j)[l]);
    m[l] = acc.value();
  }
  return m;
}

namespace {

double posterior_mse_at(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                        const QuadratureScheme& scheme) {
  const MixtureEval fg(g, kernel);
  const MixtureEval f0(g0, kernel);
  const SampleSpaceGrid grid = pair_grid(g, g0, kernel, scheme);
  std::vector<double> pg(g.size());
  std::vector<double> p0(g0.size());
  CompensatedSum acc;
  grid.for_each([&](std::span<const double> x, double w) {
    const double l0 = f0.log_density(x.data());
    if (l0 == kNegInf || fg.log_density(x.data()) == kNegInf) return;
    fg.posterior(x.data(), pg);
    f0.posterior(x.data(), p0);
    double dist2 = 0.0;
    for (int l = 0; l < kernel.d; ++l) {
      CompensatedSum diff;
      for (std::size_t j = 0; j < g.size(); ++j) diff.add(pg[j] * g.atom(j)[l]);
      for (std::size_t j = 0; j < g0.size(); ++j) diff.add(-p0[j] * g0.atom(j)[l]);
      dist2 += diff.value() * diff.value();
    }
    acc.add(w * std::exp(l0) * dist2);
  });
  return acc.value();
}

}  // namespace

double posterior_mean_mse(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                          const QuadratureScheme& scheme) {
  kernel.validate();
  g.check_in(kernel);
  g0.check_in(kernel);
  const double base = posterior_mse_at(g, g0, kernel, scheme);
  const double fine = posterior_mse_at(g, g0, kernel, scheme.refined());
  check_refinement(base, fine, "posterior_mean_mse");
  return fine;
}

double plugin_functional(const DiscreteMixing& g, const KernelSpec& kernel, const Functional& h,
                         const QuadratureScheme& scheme) {
  scheme.validate();
  kernel.validate();
  g.check_in(kernel);
  if (h.coord < 0 || h.coord >= kernel.d) throw InvalidArgument("functional: bad coordinate");
  const bool gaussian = kernel.is_gaussian(h.coord);
  CompensatedSum acc;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double th = g.atom(j)[h.coord];
    double v = 0.0;
    switch (h.kind) {
      case FunctionalKind::Mean:
        v = th;
        break;
      case FunctionalKind::CdfIndicator:
        if (gaussian) {
          v = 0.5 * std::erfc(-(h.t - th) / std::numbers::sqrt2);
        } else {
          v = h.t < 0.0 ? 0.0 : boost::math::gamma_q(std::floor(h.t) + 1.0, th);
        }
        break;
      case FunctionalKind::PointMass:
        if (gaussian) throw InvalidArgument("functional: point-mass indicator needs a Poisson coordinate");
        if (h.t < 0.0 || h.t != std::floor(h.t)) {
          v = 0.0;
        } else {
          v = std::exp(h.t * std::log(th) - th - std::lgamma(h.t + 1.0));
        }
        break;
    }
    acc.add(g.weight(j) * v);
  }
  return acc.value();
}

namespace {

// S(x)^2 partial sum over orders 0..K plus the per-term tail bound.
struct SSeries {
  double partial = 0.0;
  double tail = 0.0;
};

SSeries s_series(const KernelSpec& kernel, std::span<const double> theta0, std::span<const double> x,
                 double log_f0, int K) {
  const int d = kernel.d;
  // A_l[k] = q_k(x_l)^2 p_{θ0,l}(x_l) / (a_k k!), via the orthonormal
  // recurrence started at sqrt(p) so that values stay bounded by 1.
  std::vector<std::vector<double>> A(d, std::vector<double>(static_cast<std::size_t>(K) + 1));
  for (int l = 0; l < d; ++l) {
    std::vector<double> col(static_cast<std::size_t>(K) + 1);
    double log_p = 0.0;
    if (kernel.is_gaussian(l)) {
      const double t = x[l] - theta0[l];
      log_p = -0.5 * t * t - kLogSqrt2Pi;
    } else {
      log_p = x[l] * std::log(theta0[l]) - theta0[l] - std::lgamma(x[l] + 1.0);
    }
    const double root = std::exp(0.5 * log_p);
    col[0] = root;
    if (K >= 1) {
      if (kernel.is_gaussian(l)) {
        const double t = x[l] - theta0[l];
        col[1] = t * root;
        for (int k = 1; k < K; ++k) {
          col[k + 1] = (t * col[k] - std::sqrt(static_cast<double>(k)) * col[k - 1]) /
                       std::sqrt(k + 1.0);
        }
      } else {
        const double lam = theta0[l];
        col[1] = (x[l] - lam) / std::sqrt(lam) * root;
        for (int k = 1; k < K; ++k) {
          col[k + 1] = ((x[l] - lam - k) * col[k] - std::sqrt(k * lam) * col[k - 1]) /
                       std::sqrt(lam * (k + 1.0));
        }
      }
    }
    for (int k = 0; k <= K; ++k) A[l][k] = col[k] * col[k];
  }
  // C[k] = Σ_{|α|=k} Π_l A_l[α_l]
  std::vector<double> C = A[0];
  for (int l = 1; l < d; ++l) {
    std::vector<double> next(static_cast<std::size_t>(K) + 1, 0.0);
    for (int i = 0; i <= K; ++i) {
      if (C[i] == 0.0) continue;
      for (int j = 0; i + j <= K; ++j) next[i + j] += C[i] * A[l][j];
    }
    C = std::move(next);
  }
  CompensatedSum acc;
  for (int k = 0; k <= K; ++k) {
    const double kk = std::max(k, 1);
    acc.add(C[k] / (kk * kk * std::pow(k + 1.0, d)));
  }
  SSeries s;
  const double inv_f0 = std::exp(-log_f0);
  s.partial = acc.value() * inv_f0;
  // Each summand is at most (2π)^{-b/2} / ((k∨1)^2 (k+1) f_g0), so the
  // orders above K add at most (2π)^{-b/2} / (2 K^2 f_g0).
  s.tail = std::exp(-kernel.b * kLogSqrt2Pi) / (2.0 * static_cast<double>(K) * K) * inv_f0;
  return s;
}

}  // namespace

Envelope posterior_error_envelope(const DiscreteMixing& g, const DiscreteMixing& g0,
                                  const KernelSpec& kernel, std::span<const double> x, int kmax) {
  kernel.validate();
  g.check_in(kernel);
  g0.check_in(kernel);
  kernel.check_observation(x);
  const int J = static_cast<int>(g0.size());
  if (kmax < 2 * J) throw InvalidArgument("envelope: kmax must be at least 2J");
  if (kmax > kDefaultPolyCap) throw InvalidArgument("envelope: kmax exceeds the polynomial cap");
  const int d = kernel.d;
  const Point theta0 = default_theta0(g0);
  Envelope env;
  env.C0_bound = 1.0 / g0.weight(g0.heaviest_atom());
  env.M = kernel.max_distance_from(theta0);
  const MomentGap gap = moment_gap(g, g0, theta0, 2 * J);
  env.delta = gap.delta;

  // B = Σ_k (sup_{|α|∈{k-1,k}} a_α) k^2 (k+1)^{d+1} ||Δm_k||_F^2 / k!
  const double log_r = log_norm_ratio(kernel, theta0);
  const auto log_weight = [&](int k) {
    return std::max((k - 1) * log_r, k * log_r) + 2.0 * std::log(static_cast<double>(k)) +
           (d + 1) * std::log(k + 1.0);
  };
  CompensatedSum B;
  for (int k = 1; k <= kmax; ++k) {
    B.add(std::exp(log_weight(k)) * frob_over_factorial(moment_diffs(g, g0, theta0, k)));
  }
  const double Matoms = std::max(max_atom_distance(g, theta0), max_atom_distance(g0, theta0));
  const double log_M = Matoms > 0.0 ? std::log(Matoms) : kNegInf;
  const double log_delta = env.delta > 0.0 ? std::log(env.delta) : kNegInf;
  env.B_tail = Matoms == 0.0 ? 0.0 : tail_series(kmax, [&](int k) {
    const double trivial = std::log(4.0) + 2.0 * k * log_M;
    const double mcl = k * std::log(static_cast<double>(d)) + 2.0 * std::log(static_cast<double>(k)) +
                       4.0 * J * k * std::log1p(env.M) + 2.0 * log_delta;
    return log_weight(k) + std::min(trivial, mcl) - log_factorial(k);
  });
  env.B = B.value() + env.B_tail;

  const double log_f0 = MixtureEval(g0, kernel).log_density(x.data());
  if (log_f0 == kNegInf) throw NumericalError("envelope: f_g0 vanishes at x");
  const int cap = d == 1 ? 1 << 20 : (d == 2 ? 4096 : 512);
  int K = std::max(kmax, 64);
  while (true) {
    const SSeries s = s_series(kernel, theta0, x, log_f0, K);
    const double part = std::sqrt(s.partial);
    const double full = std::sqrt(s.partial + s.tail);
    if (full - part <= 1e-3 * part) {
      env.S = full;
      env.S_slack = full - part;
      env.S_terms = K;
      break;
    }
    if (K >= cap) throw NumericalError("envelope: S(x) truncation slack above 1e-3 of the partial sum");
    K = std::min(cap, 2 * K);
  }
  env.value = (env.M + std::sqrt(static_cast<double>(d))) * std::sqrt(env.C0_bound * env.B) * env.S;
  return env;
}

}  // namespace npmle
