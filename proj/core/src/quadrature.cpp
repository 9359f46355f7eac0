#include "npmle/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "npmle/error.hpp"

namespace npmle {

Rule1D gauss_legendre(int n) {
  if (n < 1) throw InvalidArgument("gauss_legendre: need at least one node");
  Rule1D rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

Rule1D gauss_legendre_composite(double a, double b, int panels, int per_panel) {
  if (panels < 1 || !(a < b)) throw InvalidArgument("gauss_legendre_composite: bad interval");
  const Rule1D base = gauss_legendre(per_panel);
  Rule1D rule;
  rule.nodes.reserve(static_cast<std::size_t>(panels) * per_panel);
  rule.weights.reserve(rule.nodes.capacity());
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int i = 0; i < per_panel; ++i) {
      rule.nodes.push_back(mid + 0.5 * h * base.nodes[i]);
      rule.weights.push_back(0.5 * h * base.weights[i]);
    }
  }
  return rule;
}

Rule1D gauss_hermite_prob(int n) {
  if (n < 1) throw InvalidArgument("gauss_hermite_prob: need at least one node");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi, Eigen::EigenvaluesOnly);
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  // Newton polish on the orthonormal Hermite polynomial, then the
  // Christoffel weight 1 / (n h_{n-1}(x)^2), which keeps full relative
  // accuracy even for the outermost nodes.
  auto eval = [n](double x, double& hn, double& hn1) {
    double prev = 0.0;
    double cur = 1.0;
    for (int k = 0; k < n; ++k) {
      const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                          std::sqrt(static_cast<double>(k) + 1.0);
      prev = cur;
      cur = next;
    }
    hn = cur;
    hn1 = prev;
  };
  for (int i = 0; i < n; ++i) {
    double x = eig.eigenvalues()(i);
    double hn = 0.0;
    double hn1 = 0.0;
    for (int iter = 0; iter < 10; ++iter) {
      eval(x, hn, hn1);
      const double dx = hn / (std::sqrt(static_cast<double>(n)) * hn1);
      x -= dx;
      if (std::abs(dx) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    eval(x, hn, hn1);
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / (n * hn1 * hn1);
  }
  return rule;
}

int poisson_cutoff(double lambda, double tol) {
  if (!(lambda > 0.0) || !(tol > 0.0)) throw InvalidArgument("poisson_cutoff: bad arguments");
  const double log_tol = std::log(tol);
  int x = static_cast<int>(std::floor(lambda)) + 1;
  while (true) {
    const double xd = x;
    const double log_bound = -lambda + xd * (1.0 + std::log(lambda) - std::log(xd));
    if (log_bound < log_tol) return x;
    ++x;
  }
}

void QuadratureScheme::validate() const {
  if (gauss_nodes < 64 || gauss_nodes % kPanelNodes != 0) {
    throw InvalidArgument("quadrature: node count must be >= 64 and a multiple of 16");
  }
  if (!(radius >= 8.0)) throw InvalidArgument("quadrature: truncation radius must be >= 8");
  if (!(tail_tol > 0.0 && tail_tol <= 1e-12)) {
    throw InvalidArgument("quadrature: Poisson tail tolerance must lie in (0, 1e-12]");
  }
}

QuadratureScheme QuadratureScheme::refined() const {
  QuadratureScheme r = *this;
  r.gauss_nodes *= 2;
  r.tail_tol = std::max(tail_tol * 1e-4, 1e-300);
  return r;
}

namespace {

std::vector<double> with_box_hi(const KernelSpec& kernel, std::span<const double> poisson_lambda) {
  std::vector<double> hi(kernel.theta_hi);
  for (int l = kernel.b; l < kernel.d; ++l) hi[l] = std::max(hi[l], poisson_lambda[l]);
  return hi;
}

}  // namespace

SampleSpaceGrid::SampleSpaceGrid(const KernelSpec& kernel, const QuadratureScheme& scheme,
                                 std::span<const double> poisson_lambda)
    : SampleSpaceGrid(kernel, scheme, kernel.theta_lo, with_box_hi(kernel, poisson_lambda)) {}

SampleSpaceGrid::SampleSpaceGrid(const KernelSpec& kernel, const QuadratureScheme& scheme,
                                 std::span<const double> range_lo, std::span<const double> range_hi) {
  scheme.validate();
  axes_.resize(kernel.d);
  for (int l = 0; l < kernel.d; ++l) {
    if (kernel.is_gaussian(l)) {
      axes_[l] = gauss_legendre_composite(range_lo[l] - scheme.radius, range_hi[l] + scheme.radius,
                                          scheme.gauss_nodes / QuadratureScheme::kPanelNodes,
                                          QuadratureScheme::kPanelNodes);
    } else {
      const int top = poisson_cutoff(range_hi[l], scheme.tail_tol);
      Rule1D& ax = axes_[l];
      ax.nodes.resize(static_cast<std::size_t>(top) + 1);
      ax.weights.assign(static_cast<std::size_t>(top) + 1, 1.0);
      for (int x = 0; x <= top; ++x) ax.nodes[x] = x;
    }
  }
}

std::size_t SampleSpaceGrid::size() const {
  std::size_t n = 1;
  for (const auto& ax : axes_) n *= ax.size();
  return n;
}

double SampleSpaceGrid::node(std::size_t i, std::span<double> x) const {
  double w = 1.0;
  for (int l = dim() - 1; l >= 0; --l) {
    const std::size_t m = axes_[l].size();
    const std::size_t j = i % m;
    i /= m;
    x[l] = axes_[l].nodes[j];
    w *= axes_[l].weights[j];
  }
  return w;
}

void SampleSpaceGrid::for_each(
    const std::function<void(std::span<const double> x, double w)>& fn) const {
  const std::size_t total = size();
  std::vector<double> x(axes_.size());
  for (std::size_t i = 0; i < total; ++i) {
    const double w = node(i, x);
    fn(x, w);
  }
}

}  // namespace npmle
