#include "npmle/npmle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "npmle/density.hpp"
#include "npmle/error.hpp"
#include "npmle/numeric.hpp"

namespace npmle {

void SolverConfig::validate() const {
  if (grid_per_dim < 32) throw InvalidArgument("solver: grid_per_dim must be >= 32");
  if (!(tol_gap > 0.0 && tol_gap <= 1e-4)) throw InvalidArgument("solver: tol_gap must lie in (0, 1e-4]");
  if (max_sweeps < 1) throw InvalidArgument("solver: max_sweeps must be positive");
  if (em_inner < 0) throw InvalidArgument("solver: em_inner must be nonnegative");
  if (refine_levels < 1) throw InvalidArgument("solver: refine_levels must be >= 1");
}

std::vector<Point> base_grid(const KernelSpec& kernel, int per_dim) {
  kernel.validate();
  if (per_dim < 1) throw InvalidArgument("base_grid: need at least one point per dimension");
  const int d = kernel.d;
  std::size_t total = 1;
  for (int l = 0; l < d; ++l) total *= static_cast<std::size_t>(per_dim);
  std::vector<Point> out(total, Point(d));
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rest = i;
    for (int l = d - 1; l >= 0; --l) {
      const auto q = static_cast<double>(rest % per_dim);
      rest /= per_dim;
      out[i][l] = per_dim == 1 ? 0.5 * (kernel.theta_lo[l] + kernel.theta_hi[l])
                               : kernel.theta_lo[l] + (kernel.theta_hi[l] - kernel.theta_lo[l]) * q / (per_dim - 1);
    }
  }
  return out;
}

namespace {

// Likelihood columns S_ij = p_{θ_j}(X_i) / exp(c_i), c_i = max over the box
// of log p_θ(X_i), so that every entry lies in [0, 1].
class LikelihoodMatrix {
 public:
  LikelihoodMatrix(const Dataset& data, const KernelSpec& kernel) : data_(data), kernel_(kernel) {
    n_ = data.size();
    row_const_.resize(n_);
    row_scale_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* x = data.row_ptr(i);
      row_scale_[i] = max_log_density_over_box(kernel, x);
      double c = -kernel.b * kLogSqrt2Pi;
      for (int l = kernel.b; l < kernel.d; ++l) c -= std::lgamma(x[l] + 1.0);
      row_const_[i] = c - row_scale_[i];
    }
  }

  std::size_t n() const { return n_; }
  std::size_t size() const { return probes_.size(); }
  const Point& probe(std::size_t j) const { return probes_[j]; }
  const std::vector<double>& column(std::size_t j) const { return cols_[j]; }
  double scale_sum() const {
    CompensatedSum acc;
    for (double c : row_scale_) acc.add(c);
    return acc.value();
  }

  // Returns false when the point is already a probe.
  bool add(const Point& theta) {
    if (!seen_.insert(theta).second) return false;
    probes_.push_back(theta);
    std::vector<double> col(n_);
    const int d = kernel_.d;
    const int b = kernel_.b;
    double pois_shift = 0.0;
    std::vector<double> log_theta(d, 0.0);
    for (int l = b; l < d; ++l) {
      log_theta[l] = std::log(theta[l]);
      pois_shift += theta[l];
    }
    for (std::size_t i = 0; i < n_; ++i) {
      const double* x = data_.row_ptr(i);
      double v = row_const_[i] - pois_shift;
      for (int l = 0; l < b; ++l) {
        const double t = x[l] - theta[l];
        v -= 0.5 * t * t;
      }
      for (int l = b; l < d; ++l) v += x[l] * log_theta[l];
      col[i] = std::exp(v);
    }
    cols_.push_back(std::move(col));
    return true;
  }

 private:
  const Dataset& data_;
  const KernelSpec& kernel_;
  std::size_t n_ = 0;
  std::vector<double> row_const_;
  std::vector<double> row_scale_;
  std::vector<Point> probes_;
  std::vector<std::vector<double>> cols_;
  std::set<Point> seen_;
};

class WeightSolver {
 public:
  explicit WeightSolver(const LikelihoodMatrix& S) : S_(S), f_(S.n()) {}

  std::vector<double> w;        // over all probes
  std::vector<std::size_t> act;  // probes with w > 0 or under consideration

  void refresh() {
    std::fill(f_.begin(), f_.end(), 0.0);
    for (std::size_t j : act) {
      if (w[j] == 0.0) continue;
      const auto& col = S_.column(j);
      for (std::size_t i = 0; i < f_.size(); ++i) f_[i] += w[j] * col[i];
    }
  }

  const std::vector<double>& f() const { return f_; }

  double scaled_loglik() const { return scaled_loglik_of(f_); }

  static double scaled_loglik_of(const std::vector<double>& f) {
    CompensatedSum acc;
    for (double v : f) acc.add(v > 0.0 ? std::log(v) : kNegInf);
    return acc.value();
  }

  // Σ_i S_ij / f_i
  double gradient(std::size_t j) const {
    const auto& col = S_.column(j);
    CompensatedSum acc;
    for (std::size_t i = 0; i < f_.size(); ++i) acc.add(col[i] / f_[i]);
    return acc.value();
  }

  void em_step() {
    const double n = static_cast<double>(f_.size());
    std::vector<double> next(act.size());
    for (std::size_t a = 0; a < act.size(); ++a) next[a] = w[act[a]] * gradient(act[a]) / n;
    double total = 0.0;
    for (double v : next) total += v;
    for (std::size_t a = 0; a < act.size(); ++a) w[act[a]] = next[a] / total;
    refresh();
  }

  // Active-set Newton on the simplex restricted to `act`; monotone in ℓ.
  void newton(double rel_tol, int max_iter = 200) {
    const double n = static_cast<double>(f_.size());
    std::vector<double> g(act.size());
    for (int iter = 0; iter < max_iter; ++iter) {
      for (std::size_t a = 0; a < act.size(); ++a) g[a] = gradient(act[a]);
      // KKT: g_j = n on the support, g_j <= n off it.
      double viol = 0.0;
      for (std::size_t a = 0; a < act.size(); ++a) {
        viol = std::max(viol, w[act[a]] > 0.0 ? std::abs(g[a] - n) : g[a] - n);
      }
      if (viol <= rel_tol * n) return;
      std::vector<std::size_t> free;
      for (std::size_t a = 0; a < act.size(); ++a) {
        if (w[act[a]] > 0.0 || g[a] > n) free.push_back(a);
      }
      Eigen::VectorXd delta;
      while (true) {
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m, m);
        for (std::size_t i = 0; i < f_.size(); ++i) {
          const double inv = 1.0 / f_[i];
          Eigen::VectorXd row(m);
          for (Eigen::Index p = 0; p < m; ++p) row(p) = S_.column(act[free[p]])[i] * inv;
          Q.selfadjointView<Eigen::Lower>().rankUpdate(row);
        }
        Q = Q.selfadjointView<Eigen::Lower>();
        const double ridge = 1e-12 * std::max(Q.trace() / static_cast<double>(m), 1e-300);
        Q.diagonal().array() += ridge;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(Q);
        Eigen::VectorXd gv(m);
        for (Eigen::Index p = 0; p < m; ++p) gv(p) = g[free[p]];
        const Eigen::VectorXd x = ldlt.solve(gv);
        const Eigen::VectorXd y = ldlt.solve(Eigen::VectorXd::Ones(m));
        const double mu = x.sum() / y.sum();
        delta = x - mu * y;
        // A zero-weight coordinate that wants to go negative leaves the free set.
        std::vector<std::size_t> keep;
        for (Eigen::Index p = 0; p < m; ++p) {
          if (!(w[act[free[p]]] == 0.0 && delta(p) < 0.0)) keep.push_back(free[p]);
        }
        if (keep.size() == free.size() || keep.empty()) break;
        free = keep;
      }
      // Ratio test.
      double t_max = 1.0;
      std::size_t blocking = free.size();
      for (std::size_t p = 0; p < free.size(); ++p) {
        if (delta(static_cast<Eigen::Index>(p)) < 0.0) {
          const double t = w[act[free[p]]] / -delta(static_cast<Eigen::Index>(p));
          if (t < t_max) {
            t_max = t;
            blocking = p;
          }
        }
      }
      double slope = 0.0;
      for (std::size_t p = 0; p < free.size(); ++p) slope += g[free[p]] * delta(static_cast<Eigen::Index>(p));
      const double base = scaled_loglik();
      std::vector<double> trial_f(f_.size());
      double t = t_max;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        std::fill(trial_f.begin(), trial_f.end(), 0.0);
        for (std::size_t a = 0; a < act.size(); ++a) {
          double wj = w[act[a]];
          for (std::size_t p = 0; p < free.size(); ++p) {
            if (free[p] == a) wj += t * delta(static_cast<Eigen::Index>(p));
          }
          if (wj <= 0.0) continue;
          const auto& col = S_.column(act[a]);
          for (std::size_t i = 0; i < f_.size(); ++i) trial_f[i] += wj * col[i];
        }
        const double val = scaled_loglik_of(trial_f);
        if (val >= base + 1e-4 * t * slope && val >= base) {
          accepted = val > base || t == t_max;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        em_step();
        if (scaled_loglik() <= base) return;
        continue;
      }
      for (std::size_t p = 0; p < free.size(); ++p) {
        double& wj = w[act[free[p]]];
        wj += t * delta(static_cast<Eigen::Index>(p));
        if (wj < 0.0) wj = 0.0;
      }
      if (t == t_max && blocking < free.size()) w[act[free[blocking]]] = 0.0;
      double total = 0.0;
      for (std::size_t j : act) total += w[j];
      for (std::size_t j : act) w[j] /= total;
      refresh();
    }
  }

  void prune(double below) {
    std::vector<std::size_t> keep;
    for (std::size_t j : act) {
      if (w[j] > below) {
        keep.push_back(j);
      } else {
        w[j] = 0.0;
      }
    }
    act = keep;
    double total = 0.0;
    for (std::size_t j : act) total += w[j];
    for (std::size_t j : act) w[j] /= total;
    refresh();
  }

 private:
  const LikelihoodMatrix& S_;
  std::vector<double> f_;
};

struct GapResult {
  double gap = 0.0;
  std::size_t argmax = 0;
};

GapResult probe_gap(const LikelihoodMatrix& S, const WeightSolver& ws) {
  const double n = static_cast<double>(S.n());
  GapResult r{-std::numeric_limits<double>::infinity(), 0};
  for (std::size_t j = 0; j < S.size(); ++j) {
    const double D = ws.gradient(j) - n;
    if (D > r.gap) {
      r.gap = D;
      r.argmax = j;
    }
  }
  return r;
}

// One vertex-exchange round loop at fixed probe set. Returns false when the
// sweep budget ran out before the gap tolerance was met.
bool run_level(const LikelihoodMatrix& S, WeightSolver& ws, const SolverConfig& cfg, int& sweeps,
               double& last_ll) {
  const double n = static_cast<double>(S.n());
  while (true) {
    const GapResult gr = probe_gap(S, ws);
    if (gr.gap <= n * cfg.tol_gap) return true;
    if (sweeps >= cfg.max_sweeps) return false;
    ++sweeps;
    if (ws.w[gr.argmax] == 0.0 &&
        std::find(ws.act.begin(), ws.act.end(), gr.argmax) == ws.act.end()) {
      ws.act.push_back(gr.argmax);
    }
    for (int e = 0; e < cfg.em_inner; ++e) ws.em_step();
    ws.newton(1e-3 * cfg.tol_gap);
    ws.prune(0.0);
    const double ll = ws.scaled_loglik();
    if (ll < last_ll - 1e-9 * (1.0 + std::abs(last_ll))) {
      throw NumericalError("solver: log-likelihood decreased across a sweep");
    }
    last_ll = ll;
  }
}

NpmleFit finish(const LikelihoodMatrix& S, WeightSolver& ws, const Dataset& data, const KernelSpec& kernel,
                const SolverConfig& cfg, int sweeps, bool converged) {
  ws.prune(1e-10);
  std::vector<Point> atoms;
  std::vector<double> weights;
  for (std::size_t j : ws.act) {
    atoms.push_back(S.probe(j));
    weights.push_back(ws.w[j]);
  }
  NpmleFit fit;
  fit.g = DiscreteMixing(std::move(atoms), std::move(weights)).canonical(kernel);
  const GapResult gr = probe_gap(S, ws);
  fit.cert.gap = gr.gap;
  fit.cert.sweeps = sweeps;
  fit.cert.support_size = static_cast<int>(fit.g.size());
  fit.cert.loglik = log_likelihood(fit.g, kernel, data);
  fit.cert.probes = S.size();
  fit.cert.certified = converged && gr.gap <= static_cast<double>(S.n()) * cfg.tol_gap;
  return fit;
}

void initialize(const LikelihoodMatrix& S, WeightSolver& ws) {
  // Best single atom among the probes.
  std::size_t best = 0;
  double best_ll = kNegInf;
  for (std::size_t j = 0; j < S.size(); ++j) {
    const double ll = WeightSolver::scaled_loglik_of(S.column(j));
    if (ll > best_ll) {
      best_ll = ll;
      best = j;
    }
  }
  ws.w.assign(S.size(), 0.0);
  ws.w[best] = 1.0;
  ws.act = {best};
  ws.refresh();
}

void check_inputs(const Dataset& data, const KernelSpec& kernel, const SolverConfig& cfg) {
  kernel.validate();
  cfg.validate();
  if (data.empty()) throw InvalidArgument("solve: empty dataset");
  data.validate(kernel);
}

}  // namespace

NpmleFit solve(const Dataset& data, const KernelSpec& kernel, const SolverConfig& cfg) {
  check_inputs(data, kernel, cfg);
  LikelihoodMatrix S(data, kernel);
  for (const auto& p : base_grid(kernel, cfg.grid_per_dim)) S.add(p);
  WeightSolver ws(S);
  initialize(S, ws);
  int sweeps = 0;
  double last_ll = ws.scaled_loglik();
  bool converged = run_level(S, ws, cfg, sweeps, last_ll);
  const int d = kernel.d;
  std::vector<double> h0(d);
  for (int l = 0; l < d; ++l) h0[l] = (kernel.theta_hi[l] - kernel.theta_lo[l]) / (cfg.grid_per_dim - 1);
  std::size_t stencil = 1;
  for (int l = 0; l < d; ++l) stencil *= 5;
  for (int level = 1; level <= cfg.refine_levels && converged; ++level) {
    const double scale = std::ldexp(1.0, -level);
    const std::vector<std::size_t> atoms = ws.act;
    for (std::size_t j : atoms) {
      const Point center = S.probe(j);
      for (std::size_t s = 0; s < stencil; ++s) {
        Point p(d);
        std::size_t rest = s;
        for (int l = 0; l < d; ++l) {
          const int off = static_cast<int>(rest % 5) - 2;
          rest /= 5;
          p[l] = std::clamp(center[l] + off * h0[l] * scale, kernel.theta_lo[l], kernel.theta_hi[l]);
        }
        S.add(p);
      }
    }
    ws.w.resize(S.size(), 0.0);
    converged = run_level(S, ws, cfg, sweeps, last_ll);
  }
  return finish(S, ws, data, kernel, cfg, sweeps, converged);
}

NpmleFit solve_on_grid(const Dataset& data, const KernelSpec& kernel, const std::vector<Point>& grid,
                       const SolverConfig& cfg) {
  check_inputs(data, kernel, cfg);
  if (grid.empty()) throw InvalidArgument("solve_on_grid: empty grid");
  LikelihoodMatrix S(data, kernel);
  for (const auto& p : grid) {
    kernel.check_theta(p);
    S.add(p);
  }
  WeightSolver ws(S);
  initialize(S, ws);
  int sweeps = 0;
  double last_ll = ws.scaled_loglik();
  const bool converged = run_level(S, ws, cfg, sweeps, last_ll);
  return finish(S, ws, data, kernel, cfg, sweeps, converged);
}

std::vector<double> directional_derivatives(const DiscreteMixing& g, const Dataset& data,
                                            const KernelSpec& kernel,
                                            const std::vector<Point>& probe_grid) {
  kernel.validate();
  data.validate(kernel);
  const MixtureEval eval(g, kernel);
  std::vector<double> log_f(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    log_f[i] = eval.log_density(data.row_ptr(i));
    if (log_f[i] == kNegInf) throw NumericalError("optimality_gap: f_g vanishes at an observation");
  }
  std::vector<double> out;
  out.reserve(probe_grid.size());
  for (const auto& theta : probe_grid) {
    kernel.check_theta(theta);
    CompensatedSum acc;
    for (std::size_t i = 0; i < data.size(); ++i) {
      acc.add(std::exp(log_density_unchecked(kernel, theta.data(), data.row_ptr(i)) - log_f[i]));
    }
    out.push_back(acc.value() - static_cast<double>(data.size()));
  }
  return out;
}

double optimality_gap(const DiscreteMixing& g, const Dataset& data, const KernelSpec& kernel,
                      const std::vector<Point>& probe_grid) {
  const auto D = directional_derivatives(g, data, kernel, probe_grid);
  if (D.empty()) throw InvalidArgument("optimality_gap: empty probe grid");
  return *std::max_element(D.begin(), D.end());
}

Membership in_Gn(const DiscreteMixing& g, const DiscreteMixing& g0, const Dataset& data,
                 const KernelSpec& kernel, double c) {
  Membership m;
  m.margin = log_likelihood(g, kernel, data) - log_likelihood(g0, kernel, data) - c;
  m.member = m.margin >= 0.0;
  return m;
}

double lrt(const DiscreteMixing& g_hat, const DiscreteMixing& g0, const Dataset& data,
           const KernelSpec& kernel) {
  return 2.0 * (log_likelihood(g_hat, kernel, data) - log_likelihood(g0, kernel, data));
}

namespace {

std::vector<double> basis_at_atoms(const OrthoBasis& basis, const DiscreteMixing& g0) {
  const int K = basis.K;
  std::vector<double> A(g0.size() * static_cast<std::size_t>(K));
  for (std::size_t j = 0; j < g0.size(); ++j) {
    basis.eval_all(g0.atom(j)[basis.coord], std::span<double>(A.data() + j * K, K));
  }
  return A;
}

}  // namespace

SubmodelDesign submodel_design(const Dataset& data, const DiscreteMixing& g0, const KernelSpec& kernel,
                               const OrthoBasis& basis) {
  kernel.validate();
  data.validate(kernel);
  g0.check_in(kernel);
  if (basis.coord < 0 || basis.coord >= kernel.d) throw InvalidArgument("submodel: bad basis coordinate");
  const int K = basis.K;
  if (K < 1) throw InvalidArgument("submodel: K must be positive");
  const std::vector<double> A = basis_at_atoms(basis, g0);
  const MixtureEval eval(g0, kernel);
  SubmodelDesign des;
  des.n = data.size();
  des.K = K;
  des.h.assign(des.n * K, 0.0);
  std::vector<double> pi(g0.size());
  CompensatedSum ll;
  for (std::size_t i = 0; i < des.n; ++i) {
    ll.add(eval.posterior(data.row_ptr(i), pi));
    double* hi = des.h.data() + i * K;
    for (std::size_t j = 0; j < g0.size(); ++j) {
      if (pi[j] == 0.0) continue;
      const double* a = A.data() + j * K;
      for (int k = 0; k < K; ++k) hi[k] += pi[j] * a[k];
    }
  }
  des.loglik_g0 = ll.value();
  return des;
}

SubmodelFit solve_submodel(const SubmodelDesign& des, const DiscreteMixing& g0, const OrthoBasis& basis,
                           double tol) {
  const int K = des.K;
  if (basis.K != K) throw InvalidArgument("submodel: basis order does not match the design");
  const std::size_t J = g0.size();
  const std::vector<double> A = basis_at_atoms(basis, g0);
  const auto row = [&](std::size_t j) { return Eigen::Map<const Eigen::VectorXd>(A.data() + j * K, K); };
  const auto hrow = [&](std::size_t i) { return Eigen::Map<const Eigen::VectorXd>(des.h.data() + i * K, K); };

  // Log-barrier path on the constraints s_j = 1 + a_jᵀc ≥ 0, damped Newton at
  // each barrier weight μ. Stops once the duality gap bound J·μ is below tol·n.
  Eigen::VectorXd c = Eigen::VectorXd::Zero(K);
  const auto slack_ok = [&](const Eigen::VectorXd& cc) {
    for (std::size_t j = 0; j < J; ++j) {
      if (!(1.0 + row(j).dot(cc) > 0.0)) return false;
    }
    return true;
  };
  const auto objective = [&](const Eigen::VectorXd& cc) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < des.n; ++i) {
      const double r = 1.0 + hrow(i).dot(cc);
      if (!(r > 0.0)) return kNegInf;
      acc.add(std::log(r));
    }
    return acc.value();
  };
  const auto barrier = [&](const Eigen::VectorXd& cc, double mu) {
    if (!slack_ok(cc)) return kNegInf;
    const double f = objective(cc);
    if (f == kNegInf) return kNegInf;
    CompensatedSum acc;
    for (std::size_t j = 0; j < J; ++j) acc.add(std::log1p(row(j).dot(cc)));
    return f + mu * acc.value();
  };
  SubmodelFit fit;
  fit.basis = basis;
  const double n = static_cast<double>(des.n);
  const double gap_target = std::max(tol, 1e-14) * n;
  double mu = 1e-3 * n / static_cast<double>(J);
  int iter = 0;
  while (true) {
    for (int inner = 0; inner < 200; ++inner, ++iter) {
      if (iter >= 5000) throw NumericalError("submodel: no convergence within the iteration limit");
      Eigen::VectorXd G = Eigen::VectorXd::Zero(K);
      Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(K, K);
      for (std::size_t i = 0; i < des.n; ++i) {
        const auto h = hrow(i);
        const double r = 1.0 + h.dot(c);
        G += h / r;
        Q.selfadjointView<Eigen::Lower>().rankUpdate(h, 1.0 / (r * r));
      }
      for (std::size_t j = 0; j < J; ++j) {
        const auto a = row(j);
        const double s = 1.0 + a.dot(c);
        G += (mu / s) * a;
        Q.selfadjointView<Eigen::Lower>().rankUpdate(a, mu / (s * s));
      }
      Q = Q.selfadjointView<Eigen::Lower>();
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(Q);
      Eigen::VectorXd delta = ldlt.solve(G);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) delta = G;
      const double decrement = G.dot(delta);
      fit.grad_norm = G.norm();
      if (fit.grad_norm <= 0.1 * gap_target || decrement <= 1e-24 * n) break;
      const double base = barrier(c, mu);
      double t = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 80; ++ls, t *= 0.5) {
        const double trial = barrier(c + t * delta, mu);
        if (trial >= base + 1e-4 * t * decrement) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      c += t * delta;
    }
    if (static_cast<double>(J) * mu <= gap_target) break;
    mu = std::max(mu * 1e-3, 0.5 * gap_target / static_cast<double>(J));
  }
  const double val = objective(c);
  fit.iterations = iter;
  fit.coeffs.assign(c.data(), c.data() + K);
  fit.loglik_g0 = des.loglik_g0;
  fit.loglik = des.loglik_g0 + val;
  std::vector<double> w(J);
  double total = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    w[j] = std::max(0.0, g0.weight(j) * (1.0 + row(j).dot(c)));
    total += w[j];
  }
  for (double& v : w) v /= total;
  fit.g = DiscreteMixing(g0.atoms(), std::move(w));
  return fit;
}

SubmodelFit solve_submodel(const Dataset& data, const DiscreteMixing& g0, int K, const KernelSpec& kernel,
                           const OrthoBasis& basis, double tol) {
  if (basis.K != K) throw InvalidArgument("submodel: basis has the wrong number of polynomials");
  return solve_submodel(submodel_design(data, g0, kernel, basis), g0, basis, tol);
}

SubmodelFit solve_submodel(const Dataset& data, const MixingDescriptor& g0, int K,
                           const KernelSpec& kernel, double tol, int atoms) {
  const DiscreteMixing disc = g0.as_discrete(atoms);
  const OrthoBasis basis = orthonormal_basis(disc, K);
  return solve_submodel(data, disc, K, kernel, basis, tol);
}

namespace {

std::vector<double> gram_at(const OrthoBasis& basis, const DiscreteMixing& g0, const KernelSpec& kernel,
                            const QuadratureScheme& scheme) {
  const int K = basis.K;
  const std::vector<double> A = basis_at_atoms(basis, g0);
  const MixtureEval eval(g0, kernel);
  const SampleSpaceGrid grid = pair_grid(g0, g0, kernel, scheme);
  std::vector<CompensatedSum> acc(static_cast<std::size_t>(K) * K);
  std::vector<double> pi(g0.size());
  std::vector<double> h(K);
  grid.for_each([&](std::span<const double> x, double w) {
    const double lf = eval.posterior(x.data(), pi);
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t j = 0; j < g0.size(); ++j) {
      for (int k = 0; k < K; ++k) h[k] += pi[j] * A[j * K + k];
    }
    const double mass = w * std::exp(lf);
    for (int a = 0; a < K; ++a) {
      for (int b = 0; b <= a; ++b) acc[a * K + b].add(mass * h[a] * h[b]);
    }
  });
  std::vector<double> out(static_cast<std::size_t>(K) * K);
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b <= a; ++b) out[a * K + b] = out[b * K + a] = acc[a * K + b].value();
  }
  return out;
}

}  // namespace

std::vector<double> submodel_gram(const OrthoBasis& basis, const DiscreteMixing& g0,
                                  const KernelSpec& kernel, const QuadratureScheme& scheme) {
  kernel.validate();
  g0.check_in(kernel);
  const auto base = gram_at(basis, g0, kernel, scheme);
  const auto fine = gram_at(basis, g0, kernel, scheme.refined());
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (std::abs(base[i] - fine[i]) > 1e-6 * std::max(std::abs(base[i]), std::abs(fine[i])) + 1e-12) {
      throw NumericalError("submodel_gram: quadrature refinement disagrees");
    }
  }
  Eigen::Map<const Eigen::MatrixXd> G(fine.data(), basis.K, basis.K);
  const Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) throw SingularGramError("submodel_gram: Gram matrix is not positive definite");
  return fine;
}

}  // namespace npmle
