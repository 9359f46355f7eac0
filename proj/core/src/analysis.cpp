#include "npmle/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "npmle/density.hpp"
#include "npmle/error.hpp"
#include "npmle/numeric.hpp"

namespace npmle {

double ScoreCoefficients::weighted_norm_sq(const KernelSpec& kernel) const {
  CompensatedSum acc;
  const double d = static_cast<double>(theta0.size());
  for (const auto& [alpha, c] : coeffs) {
    const double w = std::exp(alpha.log_factorial() - log_poly_norm_const(kernel, theta0, alpha) +
                              d * std::log(alpha.order() + 1.0));
    acc.add(w * c * c);
  }
  return acc.value();
}

void ScoreCoefficients::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out.precision(17);
  out << "alpha,value\n";
  for (const auto& [alpha, c] : coeffs) out << alpha.to_string() << ',' << c << '\n';
  if (!out) throw NumericalError("write failed: " + path);
}

ScoreCoefficients score_coefficients(const DiscreteMixing& g, const DiscreteMixing& g0,
                                     const KernelSpec& kernel, std::span<const double> theta0, int kmax,
                                     const QuadratureScheme& scheme) {
  kernel.validate();
  g.check_in(kernel);
  g0.check_in(kernel);
  if (kmax < 1 || kmax > kDefaultPolyCap) throw InvalidArgument("score_coefficients: kmax out of range");
  bool on_support = false;
  for (std::size_t j = 0; j < g0.size(); ++j) {
    on_support |= std::equal(theta0.begin(), theta0.end(), g0.atom(j).begin());
  }
  if (!on_support) throw InvalidArgument("score_coefficients: theta0 is not a support point of g0");
  ScoreCoefficients sc;
  sc.theta0.assign(theta0.begin(), theta0.end());
  sc.kmax = kmax;
  sc.chi = std::sqrt(chi_square(g, g0, kernel, scheme));
  if (!(sc.chi > 0.0)) throw InvalidArgument("score_coefficients: g and g0 give the same density");
  const int d = kernel.d;
  for (const auto& alpha : multi_indices_up_to(d, kmax)) {
    if (alpha.order() == 0) continue;
    const double dm = moment(g, theta0, alpha, kmax) - moment(g0, theta0, alpha, kmax);
    sc.coeffs[alpha] = dm / std::exp(alpha.log_factorial()) / sc.chi;
  }
  double M = 0.0;
  for (const auto* mix : {&g, &g0}) {
    for (std::size_t j = 0; j < mix->size(); ++j) {
      for (int l = 0; l < d; ++l) M = std::max(M, std::abs(mix->atom(j)[l] - theta0[l]));
    }
  }
  // Σ_{|α|=k} M^k/α! = (dM)^k/k!
  CompensatedSum tail;
  const double r = d * M;
  for (int k = kmax + 1; k <= kmax + 400; ++k) {
    const double term = r == 0.0 ? 0.0 : std::exp(k * std::log(r) - log_factorial(k));
    tail.add(term);
    if (k > r && term < 1e-300) break;
  }
  sc.tail = 2.0 * tail.value() / sc.chi;
  return sc;
}

ScoreValue score_eval(const ScoreCoefficients& sc, const DiscreteMixing& g, const DiscreteMixing& g0,
                      const KernelSpec& kernel, std::span<const double> x) {
  kernel.check_observation(x);
  const double log_f0 = log_mixture_density(g0, kernel, x);
  const double log_p0 = log_component_density(kernel, sc.theta0, x);
  CompensatedSum series;
  for (const auto& [alpha, c] : sc.coeffs) series.add(c * orth_poly_eval(kernel, sc.theta0, alpha, x));
  ScoreValue v;
  v.truncated = std::exp(log_p0 - log_f0) * series.value();
  v.direct = std::expm1(log_mixture_density(g, kernel, x) - log_f0) / sc.chi;
  return v;
}

double wasserstein1(const DiscreteMixing& g1, const DiscreteMixing& g2) {
  if (g1.dim() != g2.dim()) throw InvalidArgument("wasserstein1: dimension mismatch");
  if (g1.dim() > 1) return wasserstein1_transport(g1, g2);
  // Merge the two step CDFs; between consecutive breakpoints the quantile
  // functions are constant.
  auto sorted = [](const DiscreteMixing& g) {
    std::vector<std::pair<double, double>> v;
    for (std::size_t j = 0; j < g.size(); ++j) v.emplace_back(g.atom(j)[0], g.weight(j));
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto a = sorted(g1);
  const auto b = sorted(g2);
  std::size_t i = 0, j = 0;
  double ra = a[0].second, rb = b[0].second;
  CompensatedSum acc;
  while (i < a.size() && j < b.size()) {
    const double m = std::min(ra, rb);
    acc.add(m * std::abs(a[i].first - b[j].first));
    ra -= m;
    rb -= m;
    if (ra <= rb) {
      if (++i < a.size()) ra += a[i].second;
    } else {
      if (++j < b.size()) rb += b[j].second;
    }
  }
  return acc.value();
}

namespace {

// Transportation simplex on a dense m×n instance with a spanning-tree basis.
class Transport {
 public:
  Transport(std::vector<double> supply, std::vector<double> demand, std::vector<double> cost)
      : m_(supply.size()), n_(demand.size()), a_(std::move(supply)), b_(std::move(demand)), c_(std::move(cost)) {}

  double run() {
    initial_basis();
    double cmax = 0.0;
    for (double c : c_) cmax = std::max(cmax, c);
    const double tol = 1e-13 * std::max(cmax, 1e-300);
    const std::size_t cap = 50 * (m_ + n_) * (m_ + n_) + 1000;
    for (std::size_t it = 0; it < cap; ++it) {
      potentials();
      double best = -tol;
      std::size_t ei = m_, ej = n_;
      for (std::size_t i = 0; i < m_; ++i) {
        for (std::size_t j = 0; j < n_; ++j) {
          const double rc = c_[i * n_ + j] - u_[i] - v_[j];
          if (rc < best) {
            best = rc;
            ei = i;
            ej = j;
          }
        }
      }
      if (ei == m_) return objective();
      pivot(ei, ej);
    }
    throw NumericalError("wasserstein1: transportation simplex did not converge");
  }

 private:
  struct Cell {
    std::size_t i, j;
    double flow;
  };

  void initial_basis() {
    // Northwest corner; a simultaneous exhaustion leaves a zero-flow basic cell.
    std::vector<double> a = a_, b = b_;
    std::size_t i = 0, j = 0;
    while (i < m_ && j < n_) {
      const double f = std::min(a[i], b[j]);
      basis_.push_back({i, j, f});
      a[i] -= f;
      b[j] -= f;
      if (i == m_ - 1) {
        ++j;
      } else if (j == n_ - 1) {
        ++i;
      } else if (a[i] <= b[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Nodes 0..m-1 are rows, m..m+n-1 columns; returns the tree adjacency.
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(m_ + n_);
    for (std::size_t e = 0; e < basis_.size(); ++e) {
      adj[basis_[e].i].push_back(e);
      adj[m_ + basis_[e].j].push_back(e);
    }
    return adj;
  }

  void potentials() {
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    const auto adj = adjacency();
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t e : adj[node]) {
        const Cell& cell = basis_[e];
        const std::size_t other = node < m_ ? m_ + cell.j : cell.i;
        if (seen[other]) continue;
        seen[other] = 1;
        if (node < m_) {
          v_[cell.j] = c_[cell.i * n_ + cell.j] - u_[cell.i];
        } else {
          u_[cell.i] = c_[cell.i * n_ + cell.j] - v_[cell.j];
        }
        stack.push_back(other);
      }
    }
  }

  void pivot(std::size_t ei, std::size_t ej) {
    // Path in the tree from column ej to row ei closes the cycle.
    const auto adj = adjacency();
    std::vector<std::size_t> via(m_ + n_, basis_.size());
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> queue{m_ + ej};
    seen[m_ + ej] = 1;
    for (std::size_t q = 0; q < queue.size() && !seen[ei]; ++q) {
      const std::size_t node = queue[q];
      for (std::size_t e : adj[node]) {
        const std::size_t other = node < m_ ? m_ + basis_[e].j : basis_[e].i;
        if (seen[other]) continue;
        seen[other] = 1;
        via[other] = e;
        queue.push_back(other);
      }
    }
    // Walk back from ei; edges alternate −, +, −, ... after the entering cell.
    std::vector<std::size_t> path;
    std::size_t node = ei;
    while (node != m_ + ej) {
      const std::size_t e = via[node];
      path.push_back(e);
      node = node < m_ ? m_ + basis_[e].j : basis_[e].i;
    }
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = basis_.size();
    for (std::size_t p = 0; p < path.size(); p += 2) {
      if (basis_[path[p]].flow < theta) {
        theta = basis_[path[p]].flow;
        leave = path[p];
      }
    }
    for (std::size_t p = 0; p < path.size(); ++p) {
      basis_[path[p]].flow += (p % 2 == 0 ? -theta : theta);
    }
    basis_[leave] = {ei, ej, theta};
  }

  double objective() const {
    CompensatedSum acc;
    for (const Cell& cell : basis_) acc.add(cell.flow * c_[cell.i * n_ + cell.j]);
    return acc.value();
  }

  std::size_t m_, n_;
  std::vector<double> a_, b_, c_;
  std::vector<Cell> basis_;
  std::vector<double> u_, v_;
};

}  // namespace

double wasserstein1_transport(const DiscreteMixing& g1, const DiscreteMixing& g2) {
  if (g1.dim() != g2.dim()) throw InvalidArgument("wasserstein1: dimension mismatch");
  if (g1.dim() > 3) throw InvalidArgument("wasserstein1: dimension above 3");
  if (g1.size() > 200 || g2.size() > 200) throw InvalidArgument("wasserstein1: more than 200 atoms");
  const std::size_t m = g1.size(), n = g2.size();
  std::vector<double> cost(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int l = 0; l < g1.dim(); ++l) {
        const double t = g1.atom(i)[l] - g2.atom(j)[l];
        s += t * t;
      }
      cost[i * n + j] = std::sqrt(s);
    }
  }
  std::vector<double> a(m), b(n);
  for (std::size_t i = 0; i < m; ++i) a[i] = g1.weight(i);
  for (std::size_t j = 0; j < n; ++j) b[j] = g2.weight(j);
  // Make the totals agree exactly so the tree stays balanced.
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  b.back() += sa - sb;
  if (b.back() < 0.0) b.back() = 0.0;
  return Transport(std::move(a), std::move(b), std::move(cost)).run();
}

double asy_gap(const Dataset& data, const DiscreteMixing& g_hat, const DiscreteMixing& g0,
               const KernelSpec& kernel, const QuadratureScheme& scheme) {
  const double n = static_cast<double>(data.size());
  const double nchi = n * chi_square(g_hat, g0, kernel, scheme);
  const double stat = 2.0 * (log_likelihood(g_hat, kernel, data) - log_likelihood(g0, kernel, data));
  return std::abs(nchi - stat);
}

}  // namespace npmle
