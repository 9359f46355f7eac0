#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "npmle/dataset.hpp"
#include "npmle/kernel.hpp"

namespace npmle {

// Atomic mixing distribution: atoms in R^d with probability weights.
class DiscreteMixing {
 public:
  DiscreteMixing() = default;
  // Weights must be nonnegative and sum to 1 within 1e-9; they are
  // renormalized to sum to 1 exactly (up to rounding).
  DiscreteMixing(std::vector<Point> atoms, std::vector<double> weights);
  static DiscreteMixing point_mass(Point theta);

  int dim() const { return atoms_.empty() ? 0 : static_cast<int>(atoms_.front().size()); }
  std::size_t size() const { return atoms_.size(); }
  const Point& atom(std::size_t j) const { return atoms_[j]; }
  double weight(std::size_t j) const { return weights_[j]; }
  const std::vector<Point>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }

  void check_in(const KernelSpec& kernel) const;

  // Atoms closer than eps are merged: weights add, location is the
  // weight-weighted mean. Zero-weight atoms are dropped. Result is sorted
  // lexicographically by location.
  DiscreteMixing merged(double eps) const;
  // merged(1e-6 * kernel.diameter())
  DiscreteMixing canonical(const KernelSpec& kernel) const;

  Point mean() const;
  // Highest-weight atom; ties go to the lexicographically smallest atom.
  std::size_t heaviest_atom() const;

 private:
  std::vector<Point> atoms_;
  std::vector<double> weights_;
};

// Uniform distribution on an axis-aligned box.
struct UniformBox {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }
  // Equal-weight atoms at the midpoint quantiles (i + 1/2)/m of each
  // coordinate, m = round(count^{1/d}); m^d atoms in total.
  DiscreteMixing discretize(int count = 512) const;
};

// A g0 as accepted by the studies: either atomic or uniform on a box.
struct MixingDescriptor {
  bool uniform = false;
  DiscreteMixing discrete;
  UniformBox box;

  int dim() const { return uniform ? box.dim() : discrete.dim(); }
  // The discrete mixing used for all density work; uniform boxes are
  // discretized on `atoms` quantile atoms.
  DiscreteMixing as_discrete(int atoms = 512) const;
};

// m_{α,g} = Σ_j w_j (θ_j − θ0)^α.
double moment(const DiscreteMixing& g, std::span<const double> theta0, const MultiIndex& alpha,
              int cap = kDefaultPolyCap);

class MomentTable {
 public:
  MomentTable(const DiscreteMixing& g, Point theta0, int cap);

  const Point& theta0() const { return theta0_; }
  int cap() const { return cap_; }
  double at(const MultiIndex& alpha) const;
  const std::map<MultiIndex, double>& entries() const { return entries_; }

  // Columns: alpha (space separated entries), value.
  void write_csv(const std::string& path) const;

 private:
  Point theta0_;
  int cap_;
  std::map<MultiIndex, double> entries_;
};

// A symmetric order-k tensor on R^d stored by its distinct entries T_α, |α| = k.
struct SymmetricTensor {
  int d = 1;
  int k = 0;
  std::vector<MultiIndex> index;
  std::vector<double> values;

  static SymmetricTensor zeros(int d, int k);

  // ⟨T, c^{⊗k}⟩ = Σ_α (k!/α!) T_α c^α
  double contract(std::span<const double> c) const;
  void contract_gradient(std::span<const double> c, std::span<double> grad) const;

  double frobenius_norm() const;
  double max_norm() const;
};

// Δm_k as a tensor: entries m_{α,g} − m_{α,g0}.
SymmetricTensor moment_difference_tensor(const DiscreteMixing& g, const DiscreteMixing& g0,
                                         std::span<const double> theta0, int k);

struct SpectralOptions {
  int starts = 64;
  int iterations = 500;
  double tol = 1e-10;
  std::uint64_t seed = 0x5eed;
};

// sup_{|c|=1} |⟨T, c^{⊗k}⟩| by multi-start projected gradient ascent.
// d = 1 is exact; d > 3 throws.
double spectral_norm(const SymmetricTensor& t, const SpectralOptions& opt = {});

// Spectral norm of Δm_k evaluated through the signed point cloud
// Σ w ⟨θ − θ0, c⟩^k, which avoids materializing the tensor.
double moment_gap_spectral(const DiscreteMixing& g, const DiscreteMixing& g0,
                           std::span<const double> theta0, int k, const SpectralOptions& opt = {});

struct MomentGap {
  std::vector<double> per_order;  // index k = 0..kmax
  double delta = 0.0;             // max over k in [1, 2J]
  int J = 0;
};

MomentGap moment_gap(const DiscreteMixing& g, const DiscreteMixing& g0,
                     std::span<const double> theta0, int kmax, const SpectralOptions& opt = {});

Dataset sample(const DiscreteMixing& g, const KernelSpec& kernel, std::size_t n, std::uint64_t seed);
Dataset sample(const UniformBox& box, const KernelSpec& kernel, std::size_t n, std::uint64_t seed);
Dataset sample(const MixingDescriptor& g, const KernelSpec& kernel, std::size_t n,
               std::uint64_t seed);

// Orthonormal polynomials q_0..q_K in one coordinate under the g0 inner
// product. Coefficients are in the affine variable t = (θ_coord − shift)/scale.
struct OrthoBasis {
  int coord = 0;
  int K = 0;
  double shift = 0.0;
  double scale = 1.0;
  std::vector<std::vector<double>> polys;  // polys[k][j]: coefficient of t^j
  std::vector<double> gram;                // K×K row-major, empty until computed

  double eval(int k, double theta_coord) const;
  // out[k-1] = q_k(θ), k = 1..K
  void eval_all(double theta_coord, std::span<double> out) const;
};

// Throws SingularGramError when the coordinate marginal of g0 has too few
// support points for K+1 independent polynomials.
OrthoBasis orthonormal_basis(const DiscreteMixing& g0, int K, int coord = 0);
OrthoBasis orthonormal_basis(const UniformBox& g0, int K, int coord = 0);
OrthoBasis orthonormal_basis(const MixingDescriptor& g0, int K, int coord = 0);

}  // namespace npmle
