#pragma once

#include <map>
#include <span>
#include <string>

#include "npmle/dataset.hpp"
#include "npmle/kernel.hpp"
#include "npmle/mixing.hpp"
#include "npmle/quadrature.hpp"

namespace npmle {

// Normalized score s = (f_g/f_g0 − 1)/χ expanded as (p_θ0/f_g0) Σ_α c_α q_α.
struct ScoreCoefficients {
  Point theta0;
  double chi = 0.0;
  int kmax = 0;
  std::map<MultiIndex, double> coeffs;  // c_α = Δm_α / (α! χ), 1 <= |α| <= kmax
  // Bound on Σ_{|α|>kmax} |c_α| from |Δm_α| <= 2 M^|α|, M = max atom offset.
  double tail = 0.0;

  // Σ_{|α|<=kmax} (|α|+1)^d α!/a_α c_α²
  double weighted_norm_sq(const KernelSpec& kernel) const;
  void write_csv(const std::string& path) const;
};

ScoreCoefficients score_coefficients(const DiscreteMixing& g, const DiscreteMixing& g0,
                                     const KernelSpec& kernel, std::span<const double> theta0,
                                     int kmax = 40, const QuadratureScheme& scheme = {});

struct ScoreValue {
  double truncated = 0.0;
  double direct = 0.0;
};

ScoreValue score_eval(const ScoreCoefficients& sc, const DiscreteMixing& g, const DiscreteMixing& g0,
                      const KernelSpec& kernel, std::span<const double> x);

// W_1 with Euclidean ground cost. d = 1 uses the quantile coupling; otherwise
// an exact transportation simplex (at most 200 atoms per side).
double wasserstein1(const DiscreteMixing& g1, const DiscreteMixing& g2);
// Always the transportation simplex; exposed so the two routes can be compared.
double wasserstein1_transport(const DiscreteMixing& g1, const DiscreteMixing& g2);

// |n χ²(f_ĝ, f_g0) − 2{ℓ_n(f_ĝ) − ℓ_n(f_g0)}|
double asy_gap(const Dataset& data, const DiscreteMixing& g_hat, const DiscreteMixing& g0,
               const KernelSpec& kernel, const QuadratureScheme& scheme = {});

}  // namespace npmle
