#pragma once

#include <vector>

#include "npmle/dataset.hpp"
#include "npmle/kernel.hpp"
#include "npmle/mixing.hpp"
#include "npmle/quadrature.hpp"

namespace npmle {

struct SolverConfig {
  int grid_per_dim = 64;
  double tol_gap = 1e-8;  // per observation
  int max_sweeps = 400;
  int em_inner = 5;
  int refine_levels = 5;

  void validate() const;
};

struct Certificate {
  double loglik = 0.0;
  // sup over the final probe set of Σ_i p_θ(X_i)/f_ĝ(X_i) − n
  double gap = 0.0;
  int sweeps = 0;
  int support_size = 0;
  bool certified = false;
  std::size_t probes = 0;
};

struct NpmleFit {
  DiscreteMixing g;
  Certificate cert;
};

// Approximate NPMLE over the kernel box. Deterministic in (data, kernel, cfg).
NpmleFit solve(const Dataset& data, const KernelSpec& kernel, const SolverConfig& cfg = {});

// Same algorithm restricted to the given candidate points (no refinement).
NpmleFit solve_on_grid(const Dataset& data, const KernelSpec& kernel, const std::vector<Point>& grid,
                       const SolverConfig& cfg = {});

// The equally spaced base grid used by solve().
std::vector<Point> base_grid(const KernelSpec& kernel, int per_dim);

// max over probes of Σ_i p_θ(X_i)/f_g(X_i) − n
double optimality_gap(const DiscreteMixing& g, const Dataset& data, const KernelSpec& kernel,
                      const std::vector<Point>& probe_grid);

// Per-probe directional derivatives, same order as probe_grid.
std::vector<double> directional_derivatives(const DiscreteMixing& g, const Dataset& data,
                                            const KernelSpec& kernel,
                                            const std::vector<Point>& probe_grid);

struct Membership {
  bool member = false;
  double margin = 0.0;  // ℓ_n(f_g) − ℓ_n(f_g0) − c
};

Membership in_Gn(const DiscreteMixing& g, const DiscreteMixing& g0, const Dataset& data,
                 const KernelSpec& kernel, double c);

// 2{ℓ_n(f_ĝ) − ℓ_n(f_g0)}
double lrt(const DiscreteMixing& g_hat, const DiscreteMixing& g0, const Dataset& data,
           const KernelSpec& kernel);

struct SubmodelFit {
  std::vector<double> coeffs;
  OrthoBasis basis;
  double loglik = 0.0;
  double loglik_g0 = 0.0;
  DiscreteMixing g;  // g_c: weights w_j (1 + Σ c_k q_k(θ_j))
  int iterations = 0;
  double grad_norm = 0.0;
};

// Row i holds h_k(X_i) = Σ_j π_j(X_i) q_k(θ_j), k = 1..K, under the g0 posterior.
struct SubmodelDesign {
  std::size_t n = 0;
  int K = 0;
  std::vector<double> h;  // n×K row-major
  double loglik_g0 = 0.0;
};

SubmodelDesign submodel_design(const Dataset& data, const DiscreteMixing& g0, const KernelSpec& kernel,
                               const OrthoBasis& basis);

// Maximizes Σ log f_{g_c}(X_i) over {c : 1 + Σ c_k q_k(θ_j) >= 0 at every atom of g0}.
SubmodelFit solve_submodel(const Dataset& data, const DiscreteMixing& g0, int K, const KernelSpec& kernel,
                           const OrthoBasis& basis, double tol = 1e-9);
SubmodelFit solve_submodel(const SubmodelDesign& design, const DiscreteMixing& g0, const OrthoBasis& basis,
                           double tol = 1e-9);
SubmodelFit solve_submodel(const Dataset& data, const MixingDescriptor& g0, int K,
                           const KernelSpec& kernel, double tol = 1e-9, int atoms = 512);

// Σ_{kk'} = ∫ h_k h_k' f_g0 dμ; with it χ²(f_{g_c}, f_g0) = cᵀ Σ c exactly.
std::vector<double> submodel_gram(const OrthoBasis& basis, const DiscreteMixing& g0,
                                  const KernelSpec& kernel, const QuadratureScheme& scheme = {});

}  // namespace npmle
