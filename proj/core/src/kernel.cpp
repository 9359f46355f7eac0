#include "npmle/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "npmle/error.hpp"
#include "npmle/numeric.hpp"

namespace npmle {

KernelSpec KernelSpec::gaussian(double lo, double hi) {
  KernelSpec k{1, 1, {lo}, {hi}};
  k.validate();
  return k;
}

KernelSpec KernelSpec::poisson(double lo, double hi) {
  KernelSpec k{1, 0, {lo}, {hi}};
  k.validate();
  return k;
}

void KernelSpec::validate() const {
  if (d < 1) throw InvalidArgument("kernel: d must be positive");
  if (b < 0 || b > d) throw InvalidArgument("kernel: b must lie in [0, d]");
  if (static_cast<int>(theta_lo.size()) != d || static_cast<int>(theta_hi.size()) != d) {
    throw InvalidArgument("kernel: theta_lo/theta_hi must have d entries");
  }
  for (int l = 0; l < d; ++l) {
    if (!std::isfinite(theta_lo[l]) || !std::isfinite(theta_hi[l])) {
      throw InvalidArgument("kernel: box bounds must be finite");
    }
    if (!(theta_lo[l] < theta_hi[l])) throw InvalidArgument("kernel: need theta_lo < theta_hi");
    if (l >= b && !(theta_lo[l] > 0.0)) {
      throw InvalidArgument("kernel: Poisson coordinates need theta_lo > 0");
    }
  }
}

bool KernelSpec::contains(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != d) return false;
  for (int l = 0; l < d; ++l) {
    const double slack = 1e-12 * (theta_hi[l] - theta_lo[l]);
    if (!(theta[l] >= theta_lo[l] - slack && theta[l] <= theta_hi[l] + slack)) return false;
  }
  return true;
}

void KernelSpec::check_theta(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != d) {
    throw InvalidArgument("parameter has wrong dimension");
  }
  if (!contains(theta)) throw InvalidArgument("parameter outside the kernel box");
}

void KernelSpec::check_observation(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != d) throw InvalidArgument("observation has wrong dimension");
  for (int l = 0; l < d; ++l) {
    if (!std::isfinite(x[l])) throw InvalidArgument("observation is not finite");
    if (l >= b && (x[l] < 0.0 || x[l] != std::floor(x[l]))) {
      throw InvalidArgument("Poisson coordinate must be a nonnegative integer");
    }
  }
}

double KernelSpec::max_distance_from(std::span<const double> theta0) const {
  double acc = 0.0;
  for (int l = 0; l < d; ++l) {
    const double far = std::max(std::abs(theta0[l] - theta_lo[l]), std::abs(theta_hi[l] - theta0[l]));
    acc += far * far;
  }
  return std::sqrt(acc);
}

double KernelSpec::diameter() const {
  double acc = 0.0;
  for (int l = 0; l < d; ++l) acc += (theta_hi[l] - theta_lo[l]) * (theta_hi[l] - theta_lo[l]);
  return std::sqrt(acc);
}

MultiIndex::MultiIndex(std::vector<int> alpha) : alpha_(std::move(alpha)) {
  order_ = 0;
  for (int a : alpha_) {
    if (a < 0) throw InvalidArgument("multi-index entries must be nonnegative");
    order_ += a;
  }
}

MultiIndex MultiIndex::unit(int d, int coord, int power) {
  std::vector<int> a(d, 0);
  a.at(coord) = power;
  return MultiIndex(std::move(a));
}

double MultiIndex::log_factorial() const {
  double acc = 0.0;
  for (int a : alpha_) acc += npmle::log_factorial(a);
  return acc;
}

double MultiIndex::factorial() const { return std::exp(log_factorial()); }

std::string MultiIndex::to_string() const {
  std::ostringstream os;
  for (std::size_t l = 0; l < alpha_.size(); ++l) {
    if (l) os << ' ';
    os << alpha_[l];
  }
  return os.str();
}

namespace {

void enumerate_order(int d, int k, int coord, std::vector<int>& cur, std::vector<MultiIndex>& out) {
  if (coord == d - 1) {
    cur[coord] = k;
    out.emplace_back(cur);
    return;
  }
  for (int a = k; a >= 0; --a) {
    cur[coord] = a;
    enumerate_order(d, k - a, coord + 1, cur, out);
  }
}

}  // namespace

std::vector<MultiIndex> multi_indices_of_order(int d, int k) {
  if (d < 1 || k < 0) throw InvalidArgument("multi_indices_of_order: bad arguments");
  std::vector<MultiIndex> out;
  std::vector<int> cur(d, 0);
  enumerate_order(d, k, 0, cur, out);
  return out;
}

std::vector<MultiIndex> multi_indices_up_to(int d, int kmax) {
  std::vector<MultiIndex> out;
  for (int k = 0; k <= kmax; ++k) {
    auto level = multi_indices_of_order(d, k);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

double log_density_unchecked(const KernelSpec& kernel, const double* theta, const double* x) {
  double acc = 0.0;
  for (int l = 0; l < kernel.b; ++l) {
    const double t = x[l] - theta[l];
    acc -= 0.5 * t * t + kLogSqrt2Pi;
  }
  for (int l = kernel.b; l < kernel.d; ++l) {
    acc += x[l] * std::log(theta[l]) - theta[l] - std::lgamma(x[l] + 1.0);
  }
  return acc;
}

double max_log_density_over_box(const KernelSpec& kernel, const double* x) {
  Point best(kernel.d);
  for (int l = 0; l < kernel.d; ++l) {
    best[l] = std::clamp(x[l], kernel.theta_lo[l], kernel.theta_hi[l]);
  }
  return log_density_unchecked(kernel, best.data(), x);
}

double log_component_density(const KernelSpec& kernel, std::span<const double> theta,
                             std::span<const double> x) {
  kernel.check_theta(theta);
  kernel.check_observation(x);
  return log_density_unchecked(kernel, theta.data(), x.data());
}

double component_density(const KernelSpec& kernel, std::span<const double> theta,
                         std::span<const double> x) {
  return std::exp(log_component_density(kernel, theta, x));
}

double SignedLog::value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }

void normalized_poly_column(const KernelSpec& kernel, int coord, double theta0_l, double x_l,
                            std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() == 1) return;
  if (kernel.is_gaussian(coord)) {
    const double t = x_l - theta0_l;
    out[1] = t;
    for (std::size_t k = 1; k + 1 < out.size(); ++k) {
      const double kd = static_cast<double>(k);
      out[k + 1] = (t * out[k] - std::sqrt(kd) * out[k - 1]) / std::sqrt(kd + 1.0);
    }
  } else {
    const double lam = theta0_l;
    out[1] = (x_l - lam) / std::sqrt(lam);
    for (std::size_t k = 1; k + 1 < out.size(); ++k) {
      const double kd = static_cast<double>(k);
      out[k + 1] = ((x_l - lam - kd) * out[k] - std::sqrt(kd * lam) * out[k - 1]) /
                   std::sqrt(lam * (kd + 1.0));
    }
  }
}

double log_poly_norm_const(const KernelSpec& kernel, std::span<const double> theta0,
                           const MultiIndex& alpha) {
  kernel.check_theta(theta0);
  if (alpha.dim() != kernel.d) throw InvalidArgument("multi-index has wrong dimension");
  double acc = 0.0;
  for (int l = kernel.b; l < kernel.d; ++l) acc -= alpha[l] * std::log(theta0[l]);
  return acc;
}

double poly_norm_const(const KernelSpec& kernel, std::span<const double> theta0,
                       const MultiIndex& alpha) {
  return std::exp(log_poly_norm_const(kernel, theta0, alpha));
}

SignedLog orth_poly_eval_log(const KernelSpec& kernel, std::span<const double> theta0,
                             const MultiIndex& alpha, std::span<const double> x, int cap) {
  kernel.check_theta(theta0);
  kernel.check_observation(x);
  if (alpha.dim() != kernel.d) throw InvalidArgument("multi-index has wrong dimension");
  if (alpha.order() > cap) throw InvalidArgument("polynomial order exceeds the configured cap");
  SignedLog result;
  std::vector<double> column;
  for (int l = 0; l < kernel.d; ++l) {
    const int k = alpha[l];
    column.assign(static_cast<std::size_t>(k) + 1, 0.0);
    normalized_poly_column(kernel, l, theta0[l], x[l], column);
    const double v = column[k];
    if (v == 0.0) return SignedLog{kNegInf, 0};
    if (v < 0.0) result.sign = -result.sign;
    const double log_v = kernel.is_gaussian(l) ? 0.0 : std::log(theta0[l]);
    result.log_abs += std::log(std::abs(v)) + 0.5 * (npmle::log_factorial(k) - k * log_v);
  }
  return result;
}

namespace {

// Unnormalized recurrences; exact in floating point for small orders.
double raw_poly(const KernelSpec& kernel, int coord, double theta0_l, double x_l, int k) {
  if (k == 0) return 1.0;
  double prev = 1.0;
  double cur = 0.0;
  if (kernel.is_gaussian(coord)) {
    const double t = x_l - theta0_l;
    cur = t;
    for (int j = 1; j < k; ++j) {
      const double next = t * cur - j * prev;
      prev = cur;
      cur = next;
    }
  } else {
    const double lam = theta0_l;
    cur = (x_l - lam) / lam;
    for (int j = 1; j < k; ++j) {
      const double next = ((x_l - lam - j) / lam) * cur - (j / lam) * prev;
      prev = cur;
      cur = next;
    }
  }
  return cur;
}

constexpr int kRawOrderLimit = 20;

}  // namespace

double orth_poly_eval(const KernelSpec& kernel, std::span<const double> theta0,
                      const MultiIndex& alpha, std::span<const double> x, int cap) {
  if (alpha.order() > kRawOrderLimit) {
    return orth_poly_eval_log(kernel, theta0, alpha, x, cap).value();
  }
  kernel.check_theta(theta0);
  kernel.check_observation(x);
  if (alpha.dim() != kernel.d) throw InvalidArgument("multi-index has wrong dimension");
  double v = 1.0;
  for (int l = 0; l < kernel.d; ++l) v *= raw_poly(kernel, l, theta0[l], x[l], alpha[l]);
  return v;
}

}  // namespace npmle
