#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace npmle {

// A d-vector: a parameter θ or an observation x.
using Point = std::vector<double>;

// Product Gaussian/Poisson component family on a bounded box.
// Coordinates [0, b) are unit-variance Gaussian locations, [b, d) are
// Poisson means; the box must sit inside (0, inf) on the Poisson block.
struct KernelSpec {
  int d = 1;
  int b = 1;
  std::vector<double> theta_lo{-1.0};
  std::vector<double> theta_hi{1.0};

  static KernelSpec gaussian(double lo, double hi);
  static KernelSpec poisson(double lo, double hi);

  // Throws InvalidArgument on a malformed spec.
  void validate() const;

  bool is_gaussian(int coord) const { return coord < b; }
  bool contains(std::span<const double> theta) const;
  void check_theta(std::span<const double> theta) const;
  void check_observation(std::span<const double> x) const;

  // sup over the box of ||θ - θ0||; attained at a corner.
  double max_distance_from(std::span<const double> theta0) const;
  double diameter() const;
};

class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> alpha);
  static MultiIndex zero(int d) { return MultiIndex(std::vector<int>(d, 0)); }
  static MultiIndex unit(int d, int coord, int power = 1);

  int dim() const { return static_cast<int>(alpha_.size()); }
  int order() const { return order_; }
  int operator[](int l) const { return alpha_[l]; }
  const std::vector<int>& values() const { return alpha_; }

  // log(α!) = Σ log(α_l!), log-gamma beyond 20!.
  double log_factorial() const;
  double factorial() const;

  // "2 0 1"
  std::string to_string() const;

  auto operator<=>(const MultiIndex&) const = default;

 private:
  std::vector<int> alpha_;
  int order_ = 0;
};

// All α in N^d with |α| = k, lexicographically descending in α_0.
std::vector<MultiIndex> multi_indices_of_order(int d, int k);
std::vector<MultiIndex> multi_indices_up_to(int d, int kmax);

inline constexpr int kDefaultPolyCap = 80;

double component_density(const KernelSpec& kernel, std::span<const double> theta,
                         std::span<const double> x);
double log_component_density(const KernelSpec& kernel, std::span<const double> theta,
                             std::span<const double> x);

// No validation; for inner loops over pre-validated atoms and observations.
double log_density_unchecked(const KernelSpec& kernel, const double* theta, const double* x);

// sup over the box of log p_θ(x), attained at θ = clamp(x) coordinatewise.
double max_log_density_over_box(const KernelSpec& kernel, const double* x);

struct SignedLog {
  double log_abs = 0.0;
  int sign = 1;
  double value() const;
};

// q_α(x): the α-th derivative of p_θ(x)/p_θ0(x) at θ0, a product of Hermite
// (Gaussian coordinates) and Charlier (Poisson coordinates) polynomials.
double orth_poly_eval(const KernelSpec& kernel, std::span<const double> theta0,
                      const MultiIndex& alpha, std::span<const double> x,
                      int cap = kDefaultPolyCap);
SignedLog orth_poly_eval_log(const KernelSpec& kernel, std::span<const double> theta0,
                             const MultiIndex& alpha, std::span<const double> x,
                             int cap = kDefaultPolyCap);

// a_α = Π_l V(θ0_l)^{-α_l}, V = 1 (Gaussian) or θ0_l (Poisson).
double poly_norm_const(const KernelSpec& kernel, std::span<const double> theta0,
                       const MultiIndex& alpha);
double log_poly_norm_const(const KernelSpec& kernel, std::span<const double> theta0,
                           const MultiIndex& alpha);

// Orthonormal polynomials of one coordinate, q_k(x_l) / sqrt(a_k k!), for
// k = 0..out.size()-1. Stable three-term recurrences; values stay O(e^{t^2/4}).
void normalized_poly_column(const KernelSpec& kernel, int coord, double theta0_l, double x_l,
                            std::span<double> out);

}  // namespace npmle
