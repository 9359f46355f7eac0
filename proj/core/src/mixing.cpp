#include "npmle/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "npmle/error.hpp"
#include "npmle/numeric.hpp"
#include "npmle/quadrature.hpp"
#include "npmle/rng.hpp"

namespace npmle {

DiscreteMixing::DiscreteMixing(std::vector<Point> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty()) throw InvalidArgument("mixing: no atoms");
  if (atoms_.size() != weights_.size()) throw InvalidArgument("mixing: atoms/weights size mismatch");
  const std::size_t d = atoms_.front().size();
  if (d == 0) throw InvalidArgument("mixing: atoms must have positive dimension");
  for (const auto& a : atoms_) {
    if (a.size() != d) throw InvalidArgument("mixing: atoms of different dimension");
    for (double v : a) {
      if (!std::isfinite(v)) throw InvalidArgument("mixing: non-finite atom");
    }
  }
  CompensatedSum total;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("mixing: weights must be nonnegative");
    total.add(w);
  }
  const double s = total.value();
  if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("mixing: weights must sum to 1");
  for (double& w : weights_) w /= s;
}

DiscreteMixing DiscreteMixing::point_mass(Point theta) {
  return DiscreteMixing({std::move(theta)}, {1.0});
}

void DiscreteMixing::check_in(const KernelSpec& kernel) const {
  if (dim() != kernel.d) throw InvalidArgument("mixing dimension does not match the kernel");
  for (const auto& a : atoms_) {
    if (!kernel.contains(a)) throw InvalidArgument("mixing atom outside the kernel box");
  }
}

DiscreteMixing DiscreteMixing::merged(double eps) const {
  const std::size_t J = atoms_.size();
  std::vector<std::size_t> order(J);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return atoms_[a] < atoms_[b];
  });
  // Union-find over pairs within eps.
  std::vector<std::size_t> parent(J);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  const auto dist = [&](std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t l = 0; l < atoms_[a].size(); ++l) {
      const double t = atoms_[a][l] - atoms_[b][l];
      acc += t * t;
    }
    return std::sqrt(acc);
  };
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t j = i + 1; j < J; ++j) {
      // Sorted by first coordinate, so later atoms only get further away on it.
      if (atoms_[order[j]][0] - atoms_[order[i]][0] > eps) break;
      if (dist(order[i], order[j]) <= eps) parent[find(order[j])] = find(order[i]);
    }
  }
  std::map<std::size_t, std::pair<Point, double>> groups;
  const std::size_t d = atoms_.front().size();
  for (std::size_t idx : order) {
    if (weights_[idx] <= 0.0) continue;
    auto& [loc, w] = groups[find(idx)];
    if (loc.empty()) loc.assign(d, 0.0);
    for (std::size_t l = 0; l < d; ++l) loc[l] += weights_[idx] * atoms_[idx][l];
    w += weights_[idx];
  }
  std::vector<std::pair<Point, double>> out;
  for (auto& [root, entry] : groups) {
    for (double& v : entry.first) v /= entry.second;
    out.push_back(std::move(entry));
  }
  std::sort(out.begin(), out.end());
  std::vector<Point> atoms;
  std::vector<double> weights;
  for (auto& [loc, w] : out) {
    atoms.push_back(std::move(loc));
    weights.push_back(w);
  }
  return DiscreteMixing(std::move(atoms), std::move(weights));
}

DiscreteMixing DiscreteMixing::canonical(const KernelSpec& kernel) const {
  return merged(1e-6 * kernel.diameter());
}

Point DiscreteMixing::mean() const {
  Point m(dim(), 0.0);
  for (int l = 0; l < dim(); ++l) {
    CompensatedSum acc;
    for (std::size_t j = 0; j < size(); ++j) acc.add(weights_[j] * atoms_[j][l]);
    m[l] = acc.value();
  }
  return m;
}

std::size_t DiscreteMixing::heaviest_atom() const {
  std::size_t best = 0;
  for (std::size_t j = 1; j < size(); ++j) {
    if (weights_[j] > weights_[best] || (weights_[j] == weights_[best] && atoms_[j] < atoms_[best])) {
      best = j;
    }
  }
  return best;
}

DiscreteMixing UniformBox::discretize(int count) const {
  const int d = dim();
  if (d < 1 || hi.size() != lo.size()) throw InvalidArgument("uniform box: bad bounds");
  for (int l = 0; l < d; ++l) {
    if (!(lo[l] < hi[l])) throw InvalidArgument("uniform box: need lo < hi");
  }
  if (count < 1) throw InvalidArgument("uniform box: need at least one atom");
  const int m = std::max(1, static_cast<int>(std::lround(std::pow(count, 1.0 / d))));
  std::size_t total = 1;
  for (int l = 0; l < d; ++l) total *= static_cast<std::size_t>(m);
  std::vector<Point> atoms(total, Point(d));
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rest = i;
    for (int l = d - 1; l >= 0; --l) {
      const auto q = static_cast<double>(rest % m);
      rest /= m;
      atoms[i][l] = lo[l] + (hi[l] - lo[l]) * (q + 0.5) / m;
    }
  }
  return DiscreteMixing(std::move(atoms), std::vector<double>(total, 1.0 / static_cast<double>(total)));
}

DiscreteMixing MixingDescriptor::as_discrete(int atoms) const {
  return uniform ? box.discretize(atoms) : discrete;
}

double moment(const DiscreteMixing& g, std::span<const double> theta0, const MultiIndex& alpha,
              int cap) {
  if (alpha.order() > cap) throw InvalidArgument("moment order exceeds the configured cap");
  if (alpha.dim() != g.dim() || static_cast<int>(theta0.size()) != g.dim()) {
    throw InvalidArgument("moment: dimension mismatch");
  }
  CompensatedSum acc;
  for (std::size_t j = 0; j < g.size(); ++j) {
    double term = g.weight(j);
    for (int l = 0; l < g.dim(); ++l) {
      if (alpha[l] > 0) term *= std::pow(g.atom(j)[l] - theta0[l], alpha[l]);
    }
    acc.add(term);
  }
  return acc.value();
}

MomentTable::MomentTable(const DiscreteMixing& g, Point theta0, int cap)
    : theta0_(std::move(theta0)), cap_(cap) {
  if (cap < 0 || cap > kDefaultPolyCap) throw InvalidArgument("moment table: bad cap");
  for (const auto& a : multi_indices_up_to(g.dim(), cap)) entries_[a] = moment(g, theta0_, a, cap);
}

double MomentTable::at(const MultiIndex& alpha) const {
  const auto it = entries_.find(alpha);
  if (it == entries_.end()) throw InvalidArgument("moment table: index beyond the cap");
  return it->second;
}

void MomentTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << std::setprecision(17) << "alpha,value\n";
  for (const auto& [a, v] : entries_) out << a.to_string() << ',' << v << '\n';
}

SymmetricTensor SymmetricTensor::zeros(int d, int k) {
  SymmetricTensor t;
  t.d = d;
  t.k = k;
  t.index = multi_indices_of_order(d, k);
  t.values.assign(t.index.size(), 0.0);
  return t;
}

namespace {

double log_multinomial(const MultiIndex& a) { return log_factorial(a.order()) - a.log_factorial(); }

double monomial(const MultiIndex& a, std::span<const double> c) {
  double v = 1.0;
  for (int l = 0; l < a.dim(); ++l) {
    if (a[l] > 0) v *= std::pow(c[l], a[l]);
  }
  return v;
}

}  // namespace

double SymmetricTensor::contract(std::span<const double> c) const {
  CompensatedSum acc;
  for (std::size_t i = 0; i < index.size(); ++i) {
    acc.add(std::exp(log_multinomial(index[i])) * values[i] * monomial(index[i], c));
  }
  return acc.value();
}

void SymmetricTensor::contract_gradient(std::span<const double> c, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const MultiIndex& a = index[i];
    const double coef = std::exp(log_multinomial(a)) * values[i];
    for (int l = 0; l < d; ++l) {
      if (a[l] == 0) continue;
      double v = coef * a[l];
      for (int m = 0; m < d; ++m) {
        const int p = a[m] - (m == l ? 1 : 0);
        if (p > 0) v *= std::pow(c[m], p);
      }
      grad[l] += v;
    }
  }
}

double SymmetricTensor::frobenius_norm() const {
  CompensatedSum acc;
  for (std::size_t i = 0; i < index.size(); ++i) {
    acc.add(std::exp(log_multinomial(index[i])) * values[i] * values[i]);
  }
  return std::sqrt(acc.value());
}

double SymmetricTensor::max_norm() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

SymmetricTensor moment_difference_tensor(const DiscreteMixing& g, const DiscreteMixing& g0,
                                         std::span<const double> theta0, int k) {
  SymmetricTensor t = SymmetricTensor::zeros(g.dim(), k);
  for (std::size_t i = 0; i < t.index.size(); ++i) {
    t.values[i] = moment(g, theta0, t.index[i]) - moment(g0, theta0, t.index[i]);
  }
  return t;
}

namespace {

// f(c) writes ∇f into grad and returns f; f is homogeneous of degree k.
using Form = std::function<double(std::span<const double> c, std::span<double> grad)>;

double normalize(std::vector<double>& c) {
  double n = 0.0;
  for (double v : c) n += v * v;
  n = std::sqrt(n);
  for (double& v : c) v /= n;
  return n;
}

double sphere_ascent(int d, const Form& f, double sign, std::vector<double> c,
                     const SpectralOptions& opt) {
  std::vector<double> grad(d);
  std::vector<double> trial(d);
  std::vector<double> trial_grad(d);
  double val = sign * f(c, grad);
  double step = 1.0;
  for (int it = 0; it < opt.iterations; ++it) {
    double radial = 0.0;
    for (int l = 0; l < d; ++l) radial += sign * grad[l] * c[l];
    std::vector<double> tangent(d);
    double tn = 0.0;
    for (int l = 0; l < d; ++l) {
      tangent[l] = sign * grad[l] - radial * c[l];
      tn += tangent[l] * tangent[l];
    }
    if (std::sqrt(tn) <= opt.tol * std::max(1.0, std::abs(val))) break;
    bool improved = false;
    while (step > 1e-14) {
      for (int l = 0; l < d; ++l) trial[l] = c[l] + step * tangent[l];
      normalize(trial);
      const double tv = sign * f(trial, trial_grad);
      if (tv > val) {
        c = trial;
        grad = trial_grad;
        val = tv;
        step = std::min(step * 2.0, 1e6);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  return val;
}

double sphere_sup_abs(int d, int k, const Form& f, const SpectralOptions& opt) {
  if (d > 3) throw InvalidArgument("spectral norm supported only for d <= 3");
  std::vector<double> grad(d);
  if (d == 1 || k == 0) {
    std::vector<double> c(d, 0.0);
    c[0] = 1.0;
    return std::abs(f(c, grad));
  }
  CounterRng rng(opt.seed, static_cast<std::uint64_t>(k));
  double best = 0.0;
  for (int s = 0; s < opt.starts; ++s) {
    std::vector<double> c(d);
    for (double& v : c) v = rng.normal();
    normalize(c);
    best = std::max(best, sphere_ascent(d, f, 1.0, c, opt));
    // Odd forms are antisymmetric, so sup f = sup |f| already.
    if (k % 2 == 0) best = std::max(best, sphere_ascent(d, f, -1.0, c, opt));
  }
  return best;
}

}  // namespace

double spectral_norm(const SymmetricTensor& t, const SpectralOptions& opt) {
  return sphere_sup_abs(t.d, t.k,
                        [&t](std::span<const double> c, std::span<double> grad) {
                          t.contract_gradient(c, grad);
                          return t.contract(c);
                        },
                        opt);
}

double moment_gap_spectral(const DiscreteMixing& g, const DiscreteMixing& g0,
                           std::span<const double> theta0, int k, const SpectralOptions& opt) {
  const int d = g.dim();
  std::vector<Point> u;
  std::vector<double> w;
  for (std::size_t j = 0; j < g.size(); ++j) {
    Point p(d);
    for (int l = 0; l < d; ++l) p[l] = g.atom(j)[l] - theta0[l];
    u.push_back(std::move(p));
    w.push_back(g.weight(j));
  }
  for (std::size_t j = 0; j < g0.size(); ++j) {
    Point p(d);
    for (int l = 0; l < d; ++l) p[l] = g0.atom(j)[l] - theta0[l];
    u.push_back(std::move(p));
    w.push_back(-g0.weight(j));
  }
  const Form form = [&](std::span<const double> c, std::span<double> grad) {
    CompensatedSum val;
    std::vector<CompensatedSum> gacc(d);
    for (std::size_t j = 0; j < u.size(); ++j) {
      double s = 0.0;
      for (int l = 0; l < d; ++l) s += u[j][l] * c[l];
      const double pk1 = k >= 1 ? std::pow(s, k - 1) : 0.0;
      val.add(w[j] * (k >= 1 ? pk1 * s : 1.0));
      for (int l = 0; l < d; ++l) gacc[l].add(w[j] * k * pk1 * u[j][l]);
    }
    for (int l = 0; l < d; ++l) grad[l] = gacc[l].value();
    return val.value();
  };
  return sphere_sup_abs(d, k, form, opt);
}

MomentGap moment_gap(const DiscreteMixing& g, const DiscreteMixing& g0,
                     std::span<const double> theta0, int kmax, const SpectralOptions& opt) {
  if (g.dim() != g0.dim()) throw InvalidArgument("moment_gap: dimension mismatch");
  if (g.dim() > 3) throw InvalidArgument("moment_gap: spectral norm supported only for d <= 3");
  MomentGap out;
  out.J = static_cast<int>(g0.size());
  if (kmax < 2 * out.J) throw InvalidArgument("moment_gap: kmax must be at least 2J");
  out.per_order.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
  for (int k = 1; k <= kmax; ++k) {
    out.per_order[k] = moment_gap_spectral(g, g0, theta0, k, opt);
    if (k <= 2 * out.J) out.delta = std::max(out.delta, out.per_order[k]);
  }
  return out;
}

namespace {

void draw_row(const KernelSpec& kernel, const double* theta, CounterRng& rng, double* x) {
  for (int l = 0; l < kernel.d; ++l) {
    if (kernel.is_gaussian(l)) {
      x[l] = theta[l] + rng.normal();
    } else {
      x[l] = static_cast<double>(rng.poisson(theta[l]));
    }
  }
}

}  // namespace

Dataset sample(const DiscreteMixing& g, const KernelSpec& kernel, std::size_t n, std::uint64_t seed) {
  kernel.validate();
  g.check_in(kernel);
  if (n == 0) throw InvalidArgument("sample: n must be positive");
  std::vector<double> cum(g.size());
  double run = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) cum[j] = run += g.weight(j);
  CounterRng rng(seed);
  std::vector<double> values(n * static_cast<std::size_t>(kernel.d));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * run;
    const auto j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    draw_row(kernel, g.atom(std::min(j, g.size() - 1)).data(), rng, values.data() + i * kernel.d);
  }
  return Dataset(kernel.d, std::move(values));
}

Dataset sample(const UniformBox& box, const KernelSpec& kernel, std::size_t n, std::uint64_t seed) {
  kernel.validate();
  if (box.dim() != kernel.d) throw InvalidArgument("sample: box dimension does not match the kernel");
  if (n == 0) throw InvalidArgument("sample: n must be positive");
  CounterRng rng(seed);
  std::vector<double> values(n * static_cast<std::size_t>(kernel.d));
  Point theta(kernel.d);
  for (std::size_t i = 0; i < n; ++i) {
    for (int l = 0; l < kernel.d; ++l) theta[l] = box.lo[l] + (box.hi[l] - box.lo[l]) * rng.uniform();
    draw_row(kernel, theta.data(), rng, values.data() + i * kernel.d);
  }
  return Dataset(kernel.d, std::move(values));
}

Dataset sample(const MixingDescriptor& g, const KernelSpec& kernel, std::size_t n,
               std::uint64_t seed) {
  return g.uniform ? sample(g.box, kernel, n, seed) : sample(g.discrete, kernel, n, seed);
}

double OrthoBasis::eval(int k, double theta_coord) const {
  const double t = (theta_coord - shift) / scale;
  const auto& p = polys.at(static_cast<std::size_t>(k));
  double v = 0.0;
  for (std::size_t j = p.size(); j-- > 0;) v = v * t + p[j];
  return v;
}

void OrthoBasis::eval_all(double theta_coord, std::span<double> out) const {
  for (int k = 1; k <= K; ++k) out[k - 1] = eval(k, theta_coord);
}

namespace {

OrthoBasis gram_schmidt(std::span<const double> t, std::span<const double> w, int K, int coord,
                        double shift, double scale) {
  if (K < 0) throw InvalidArgument("orthonormal_basis: K must be nonnegative");
  OrthoBasis basis;
  basis.coord = coord;
  basis.K = K;
  basis.shift = shift;
  basis.scale = scale;
  const std::size_t m = t.size();
  std::vector<std::vector<double>> vals;
  const auto inner = [&](const std::vector<double>& a, const std::vector<double>& b) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < m; ++i) acc.add(w[i] * a[i] * b[i]);
    return acc.value();
  };
  for (int k = 0; k <= K; ++k) {
    std::vector<double> coeff(static_cast<std::size_t>(k) + 1, 0.0);
    coeff[k] = 1.0;
    std::vector<double> v(m);
    for (std::size_t i = 0; i < m; ++i) v[i] = std::pow(t[i], k);
    const double start = inner(v, v);
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < k; ++j) {
        const double r = inner(v, vals[j]);
        for (std::size_t i = 0; i < m; ++i) v[i] -= r * vals[j][i];
        for (std::size_t c = 0; c < basis.polys[j].size(); ++c) coeff[c] -= r * basis.polys[j][c];
      }
    }
    const double nrm2 = inner(v, v);
    if (!(nrm2 > 1e-13 * start) || !(start > 0.0)) {
      throw SingularGramError("orthonormal_basis: Gram matrix is numerically singular (support too small)");
    }
    const double nrm = std::sqrt(nrm2);
    for (double& x : v) x /= nrm;
    for (double& c : coeff) c /= nrm;
    vals.push_back(std::move(v));
    basis.polys.push_back(std::move(coeff));
  }
  return basis;
}

}  // namespace

OrthoBasis orthonormal_basis(const DiscreteMixing& g0, int K, int coord) {
  if (coord < 0 || coord >= g0.dim()) throw InvalidArgument("orthonormal_basis: bad coordinate");
  std::vector<double> xs;
  for (const auto& a : g0.atoms()) xs.push_back(a[coord]);
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (static_cast<int>(distinct.size()) < K + 1) {
    throw SingularGramError("orthonormal_basis: Gram matrix is singular; g0 marginal has only " +
                            std::to_string(distinct.size()) + " support points");
  }
  CompensatedSum mean;
  for (std::size_t j = 0; j < xs.size(); ++j) mean.add(g0.weight(j) * xs[j]);
  const double shift = mean.value();
  double scale = 0.0;
  for (double x : xs) scale = std::max(scale, std::abs(x - shift));
  if (!(scale > 0.0)) scale = 1.0;
  std::vector<double> t(xs.size());
  for (std::size_t j = 0; j < xs.size(); ++j) t[j] = (xs[j] - shift) / scale;
  return gram_schmidt(t, g0.weights(), K, coord, shift, scale);
}

OrthoBasis orthonormal_basis(const UniformBox& g0, int K, int coord) {
  if (coord < 0 || coord >= g0.dim()) throw InvalidArgument("orthonormal_basis: bad coordinate");
  const Rule1D rule = gauss_legendre(256);
  std::vector<double> w(rule.weights);
  for (double& x : w) x *= 0.5;
  const double shift = 0.5 * (g0.lo[coord] + g0.hi[coord]);
  const double scale = 0.5 * (g0.hi[coord] - g0.lo[coord]);
  return gram_schmidt(rule.nodes, w, K, coord, shift, scale);
}

OrthoBasis orthonormal_basis(const MixingDescriptor& g0, int K, int coord) {
  return g0.uniform ? orthonormal_basis(g0.box, K, coord) : orthonormal_basis(g0.discrete, K, coord);
}

}  // namespace npmle
