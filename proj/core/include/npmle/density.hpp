#pragma once

#include <span>
#include <vector>

#include "npmle/dataset.hpp"
#include "npmle/kernel.hpp"
#include "npmle/mixing.hpp"
#include "npmle/quadrature.hpp"

namespace npmle {

// Fast log f_g(x) for a fixed mixing; observations are not validated.
class MixtureEval {
 public:
  MixtureEval(const DiscreteMixing& g, const KernelSpec& kernel);

  double log_density(const double* x) const;
  // Posterior weights π_j(x) ∝ w_j p_{θ_j}(x); returns log f_g(x).
  double posterior(const double* x, std::span<double> pi) const;

  const DiscreteMixing& mixing() const { return g_; }

 private:
  double log_atom(std::size_t j, const double* x, double poisson_const) const;
  double poisson_const(const double* x) const;

  DiscreteMixing g_;
  KernelSpec kernel_;
  std::vector<double> log_w_;
  std::vector<double> log_theta_;  // J×d, Poisson coordinates only
  std::vector<double> theta_sum_;  // Σ_l θ_l over Poisson coordinates
};

double mixture_density(const DiscreteMixing& g, const KernelSpec& kernel, std::span<const double> x);
double log_mixture_density(const DiscreteMixing& g, const KernelSpec& kernel,
                           std::span<const double> x);

// Σ_i log f_g(X_i). Throws NumericalError when some f_g(X_i) underflows to 0.
double log_likelihood(const DiscreteMixing& g, const KernelSpec& kernel, const Dataset& data);

struct Divergences {
  double chi_square = 0.0;
  double hellinger_sq = 0.0;  // ∫ (√f − √f0)²
};

// Both divergences from one tensor grid, verified against the refined
// scheme; throws NumericalError if the two levels disagree by more than
// 1e-6 relative. Returns the refined values.
Divergences divergences(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                        const QuadratureScheme& scheme = {});
double chi_square(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                  const QuadratureScheme& scheme = {});

// Single level, no refinement check.
Divergences divergences_at(const DiscreteMixing& g, const DiscreteMixing& g0,
                           const KernelSpec& kernel, const QuadratureScheme& scheme);

// Grid covering where f_g, f_g0 and f_g^2/f_g0 carry mass.
SampleSpaceGrid pair_grid(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                          const QuadratureScheme& scheme);

struct SeriesBound {
  Point theta0;
  double lower = 0.0;
  double upper_partial = 0.0;
  double tail_estimate = 0.0;
  int kmax = 0;
  double C0_bound = 1.0;
  // tail_estimate <= 1e-3 * max(upper_partial, 1e-12)
  bool tail_small = true;
};

// E_θ[q_k^2] for one coordinate, as a log.
double log_poly_second_moment(const KernelSpec& kernel, int coord, double theta0_l, double theta_l,
                              int k);

// Highest-weight atom of g0, ties to the lexicographically smallest.
Point default_theta0(const DiscreteMixing& g0);

SeriesBound chi_square_bounds(const DiscreteMixing& g, const DiscreteMixing& g0,
                              const KernelSpec& kernel, std::span<const double> theta0, int kmax);

Point posterior_mean(const DiscreteMixing& g, const KernelSpec& kernel, std::span<const double> x);

// ∫ ||E_g[θ|x] − E_g0[θ|x]||² f_g0 dμ, with the same refinement check.
double posterior_mean_mse(const DiscreteMixing& g, const DiscreteMixing& g0, const KernelSpec& kernel,
                          const QuadratureScheme& scheme = {});

enum class FunctionalKind { Mean, CdfIndicator, PointMass };

struct Functional {
  FunctionalKind kind = FunctionalKind::Mean;
  int coord = 0;
  double t = 0.0;  // threshold for CdfIndicator, count for PointMass
};

// ∫ h f_g dμ, evaluated atom by atom in closed form.
double plugin_functional(const DiscreteMixing& g, const KernelSpec& kernel, const Functional& h,
                         const QuadratureScheme& scheme = {});

struct Envelope {
  double value = 0.0;      // bound on ||E_g[θ|x] − E_g0[θ|x]||
  double S = 0.0;          // S(x) including its tail bound
  double S_slack = 0.0;    // S(x) minus its truncated partial sum
  int S_terms = 0;         // orders used in S
  double B = 0.0;          // Ĉ₂ Δ_g², moment series with tail
  double B_tail = 0.0;
  double delta = 0.0;      // Δ_g
  double C0_bound = 1.0;
  double M = 0.0;
};

// θ0 is the highest-weight atom of g0. Throws NumericalError when S(x)
// cannot be resolved to 1e-3 relative slack.
Envelope posterior_error_envelope(const DiscreteMixing& g, const DiscreteMixing& g0,
                                  const KernelSpec& kernel, std::span<const double> x, int kmax);

}  // namespace npmle
