#pragma once

#include <functional>
#include <span>
#include <vector>

#include "npmle/kernel.hpp"

namespace npmle {

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

// n-point Gauss-Legendre rule on [-1, 1].
Rule1D gauss_legendre(int n);

// Composite Gauss-Legendre on [a, b] with `panels` equal panels.
Rule1D gauss_legendre_composite(double a, double b, int panels, int per_panel);

// n-point Gauss-Hermite rule for the standard normal weight φ(x) (weights sum to 1).
Rule1D gauss_hermite_prob(int n);

// Smallest integer x > lambda with the Chernoff bound
// e^{-λ} (eλ/x)^x on P(Poisson(λ) >= x) below tol.
int poisson_cutoff(double lambda, double tol);

// Numerical realization of the reference measure over the sample space.
struct QuadratureScheme {
  int gauss_nodes = 512;  // per Gaussian coordinate, a multiple of kPanelNodes
  double radius = 12.0;   // integrate over [θ_lo - R, θ_hi + R]
  double tail_tol = 1e-14;

  static constexpr int kPanelNodes = 16;

  void validate() const;
  // The level used for the refinement check.
  QuadratureScheme refined() const;
};

// Tensor-product grid over the sample space of a kernel.
class SampleSpaceGrid {
 public:
  // poisson_lambda[l] is the effective Poisson mean controlling the
  // truncation on coordinate l (ignored for Gaussian coordinates).
  SampleSpaceGrid(const KernelSpec& kernel, const QuadratureScheme& scheme,
                  std::span<const double> poisson_lambda);
  // Gaussian coordinate l spans [range_lo[l] - R, range_hi[l] + R];
  // Poisson coordinate l is truncated for mean range_hi[l].
  SampleSpaceGrid(const KernelSpec& kernel, const QuadratureScheme& scheme,
                  std::span<const double> range_lo, std::span<const double> range_hi);

  std::size_t size() const;
  int dim() const { return static_cast<int>(axes_.size()); }
  const Rule1D& axis(int l) const { return axes_[l]; }

  // Visits every node in a fixed order with its product weight.
  void for_each(const std::function<void(std::span<const double> x, double w)>& fn) const;

  // Node i (row-major in axis order); writes d coordinates into x.
  double node(std::size_t i, std::span<double> x) const;

 private:
  std::vector<Rule1D> axes_;
};

}  // namespace npmle
