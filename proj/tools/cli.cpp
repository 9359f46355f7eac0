#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "npmle/analysis.hpp"
#include "npmle/dataset.hpp"
#include "npmle/density.hpp"
#include "npmle/error.hpp"
#include "npmle/harness.hpp"
#include "npmle/npmle.hpp"
#include "npmle/serialize.hpp"

namespace npmle::cli {

namespace {

struct Options {
  std::string data, kernel, g0, ghat, out, config, records, metric;
  int k = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  double tol = -1.0;
  int grid = -1;
};

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// Gaussian in every coordinate over the bounding box of the given atoms.
KernelSpec hull_kernel(const std::vector<const DiscreteMixing*>& gs) {
  const int d = gs.front()->dim();
  KernelSpec k;
  k.d = d;
  k.b = d;
  k.theta_lo.assign(d, std::numeric_limits<double>::infinity());
  k.theta_hi.assign(d, -std::numeric_limits<double>::infinity());
  for (const auto* g : gs) {
    if (g->dim() != d) throw InvalidArgument("mixings have different dimensions");
    for (std::size_t j = 0; j < g->size(); ++j) {
      for (int l = 0; l < d; ++l) {
        k.theta_lo[l] = std::min(k.theta_lo[l], g->atom(j)[l]);
        k.theta_hi[l] = std::max(k.theta_hi[l], g->atom(j)[l]);
      }
    }
  }
  for (int l = 0; l < d; ++l) {
    if (k.theta_hi[l] - k.theta_lo[l] < 1.0) {
      const double mid = 0.5 * (k.theta_lo[l] + k.theta_hi[l]);
      k.theta_lo[l] = mid - 0.5;
      k.theta_hi[l] = mid + 0.5;
    }
  }
  return k;
}

KernelSpec kernel_for(const Options& o, const std::vector<const DiscreteMixing*>& gs) {
  return o.kernel.empty() ? hull_kernel(gs) : load_kernel(o.kernel);
}

SolverConfig solver_config(const Options& o) {
  SolverConfig c;
  if (o.tol > 0) c.tol_gap = o.tol;
  if (o.grid > 0) c.grid_per_dim = o.grid;
  c.validate();
  return c;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const KernelSpec kernel = load_kernel(o.kernel);
  const Dataset data = read_dataset_csv(o.data, kernel);
  const NpmleFit fit = solve(data, kernel, solver_config(o));
  write_text_file(o.out, fit_to_json(fit));
  out << "support=" << fit.g.size() << " loglik=" << num(fit.cert.loglik) << " gap=" << num(fit.cert.gap)
      << " sweeps=" << fit.cert.sweeps << " certified=" << (fit.cert.certified ? "true" : "false") << '\n';
  return fit.cert.certified ? 0 : 2;
}

int cmd_divergence(const Options& o, std::ostream& out) {
  const DiscreteMixing g = load_mixing(o.ghat);
  const DiscreteMixing g0 = load_mixing(o.g0);
  const KernelSpec kernel = kernel_for(o, {&g, &g0});
  const std::string metric = o.metric.empty() ? "chi2" : o.metric;
  if (metric == "chi2" || metric == "hellinger") {
    const Divergences dv = divergences(g, g0, kernel);
    const double v = metric == "chi2" ? dv.chi_square : dv.hellinger_sq;
    if (!o.out.empty()) write_text_file(o.out, num(v));
    out << metric << '=' << num(v) << '\n';
  } else if (metric == "bounds") {
    const Point theta0 = default_theta0(g0);
    const SeriesBound b = chi_square_bounds(g, g0, kernel, theta0, o.k > 0 ? o.k : 40);
    if (!o.out.empty()) write_text_file(o.out, bounds_to_json(b));
    out << "lower=" << num(b.lower) << " upper=" << num(b.upper_partial + b.tail_estimate)
        << " tail=" << num(b.tail_estimate) << " kmax=" << b.kmax << '\n';
  } else if (metric == "mse") {
    const double v = posterior_mean_mse(g, g0, kernel);
    if (!o.out.empty()) write_text_file(o.out, num(v));
    out << "mse=" << num(v) << '\n';
  } else {
    throw InvalidArgument("divergence: unknown metric '" + metric + "' (chi2, hellinger, bounds, mse)");
  }
  return 0;
}

int cmd_lrt(const Options& o, std::ostream& out) {
  const DiscreteMixing g = load_mixing(o.ghat);
  const DiscreteMixing g0 = load_mixing(o.g0);
  const KernelSpec kernel = kernel_for(o, {&g, &g0});
  const Dataset data = read_dataset_csv(o.data, kernel);
  out << num(lrt(g, g0, data, kernel)) << '\n';
  return 0;
}

int cmd_demix(const Options& o, std::ostream& out) {
  const DiscreteMixing g = load_mixing(o.ghat);
  const DiscreteMixing g0 = load_mixing(o.g0);
  out << num(wasserstein1(g, g0)) << '\n';
  return 0;
}

int cmd_posterior(const Options& o, std::ostream& out) {
  const DiscreteMixing g = load_mixing(o.ghat);
  std::vector<const DiscreteMixing*> gs{&g};
  DiscreteMixing g0;
  if (!o.g0.empty()) {
    g0 = load_mixing(o.g0);
    gs.push_back(&g0);
  }
  const KernelSpec kernel = kernel_for(o, gs);
  const Dataset data = read_dataset_csv(o.data, kernel);
  std::ofstream f(o.out);
  if (!f) throw InvalidArgument("cannot open " + o.out + " for writing");
  f << std::setprecision(17);
  const int d = kernel.d;
  for (int l = 0; l < d; ++l) f << (l ? "," : "") << 'x' << l;
  for (int l = 0; l < d; ++l) f << ",pm" << l;
  if (!o.g0.empty()) f << ",pm0_dist,envelope";
  f << '\n';
  double max_env = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.row(i);
    const Point pm = posterior_mean(g, kernel, x);
    for (int l = 0; l < d; ++l) f << (l ? "," : "") << x[l];
    for (int l = 0; l < d; ++l) f << ',' << pm[l];
    if (!o.g0.empty()) {
      const Point pm0 = posterior_mean(g0, kernel, x);
      double dist = 0.0;
      for (int l = 0; l < d; ++l) dist += (pm[l] - pm0[l]) * (pm[l] - pm0[l]);
      const Envelope env = posterior_error_envelope(g, g0, kernel, x, o.k > 0 ? o.k : 20);
      max_env = std::max(max_env, env.value);
      f << ',' << std::sqrt(dist) << ',' << env.value;
    }
    f << '\n';
  }
  if (!f) throw NumericalError("write failed: " + o.out);
  out << "rows=" << data.size();
  if (!o.g0.empty()) out << " max_envelope=" << num(max_env);
  out << '\n';
  return 0;
}

int cmd_study(const Options& o, StudyKind kind, std::ostream& out) {
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (!(kind == StudyKind::Rates && cfg.study == StudyKind::Dichotomy)) cfg.study = kind;
  if (o.seed_set) cfg.seed = o.seed;
  if (o.threads > 0) cfg.threads = o.threads;
  if (o.tol > 0) cfg.solver.tol_gap = o.tol;
  if (o.grid > 0) cfg.solver.grid_per_dim = o.grid;
  cfg.validate();
  const auto recs = run_study(cfg, o.records);
  if (!o.out.empty()) write_summary_csv(recs, o.out);
  std::size_t certified = 0;
  for (const auto& r : recs) certified += r.certified;
  out << "study=" << to_string(cfg.study) << " records=" << recs.size() << " certified=" << certified << '\n';
  return 0;
}

int cmd_slope(const Options& o, std::ostream& out) {
  const auto recs = read_records(o.records);
  if (recs.empty()) throw InvalidArgument("slope: no records in " + o.records);
  Selector sel;
  sel.metric = o.metric;
  if (o.k > 0) sel.K = o.k;
  const SlopeFit f = fit_slope(recs, sel);
  char head[64];
  std::snprintf(head, sizeof head, "%.4f", f.slope);
  out << head << " slope=" << num(f.slope) << " ci=[" << num(f.ci_lo) << ',' << num(f.ci_hi)
      << "] cells=" << f.cells.size();
  for (double n : f.bad_cells) out << " nonpositive_n=" << num(n);
  out << '\n';
  return 0;
}

int cmd_qq(const Options& o, std::ostream& out) {
  const auto recs = read_records(o.records);
  const std::string metric = o.metric.empty() ? "lrt" : o.metric;
  std::vector<double> samples;
  for (const auto& r : recs) {
    if (r.K > 0 && r.K != o.k) continue;
    const auto it = r.metrics.find(metric);
    if (it != r.metrics.end()) samples.push_back(it->second);
  }
  const QQResult q = qq_against_chisq(samples, o.k);
  out << "ks=" << num(q.ks) << " mean=" << num(q.mean) << " n=" << samples.size() << " deciles";
  for (int i = 0; i < 9; ++i) out << ' ' << num(q.sample_deciles[i]) << '/' << num(q.chisq_deciles[i]);
  out << '\n';
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nonparametric maximum likelihood for Gaussian and Poisson mixtures", "npmle"};
  app.require_subcommand(1);
  Options o;
  std::string seed_text;

  const auto data = [&](CLI::App* s, bool req) { s->add_option("--data", o.data, "headerless CSV")->required(req); };
  const auto kernel = [&](CLI::App* s, bool req) { s->add_option("--kernel", o.kernel, "kernel JSON")->required(req); };
  const auto ghat = [&](CLI::App* s) { s->add_option("--ghat", o.ghat, "fitted mixing JSON")->required(); };
  const auto g0 = [&](CLI::App* s, bool req) { s->add_option("--g0", o.g0, "reference mixing JSON")->required(req); };
  const auto outp = [&](CLI::App* s, bool req) { s->add_option("--out", o.out, "output path")->required(req); };
  const auto seed = [&](CLI::App* s) { s->add_option("--seed", seed_text, "base seed"); };
  const auto study = [&](CLI::App* s) {
    s->add_option("--config", o.config, "experiment TOML")->required();
    s->add_option("--records", o.records, "JSONL records (appended, resumable)");
    outp(s, false);
    seed(s);
    s->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    s->add_option("--tol", o.tol, "solver tol_gap");
    s->add_option("--grid", o.grid, "solver grid_per_dim");
  };

  auto* fit = app.add_subcommand("fit", "fit the NPMLE to a dataset");
  data(fit, true);
  kernel(fit, true);
  outp(fit, true);
  seed(fit);
  fit->add_option("--tol", o.tol, "tol_gap per observation");
  fit->add_option("--grid", o.grid, "grid points per dimension");

  auto* div = app.add_subcommand("divergence", "chi-square, Hellinger, series bounds or posterior-mean MSE");
  ghat(div);
  g0(div, true);
  kernel(div, false);
  outp(div, false);
  div->add_option("--metric", o.metric, "chi2 | hellinger | bounds | mse");
  div->add_option("--k", o.k, "series order for bounds");
  seed(div);

  auto* lr = app.add_subcommand("lrt", "likelihood ratio statistic");
  ghat(lr);
  g0(lr, true);
  data(lr, true);
  kernel(lr, false);
  seed(lr);

  auto* dm = app.add_subcommand("demix", "Wasserstein-1 distance between mixings");
  ghat(dm);
  g0(dm, true);
  seed(dm);

  auto* post = app.add_subcommand("posterior", "posterior means, with envelopes when --g0 is given");
  ghat(post);
  data(post, true);
  kernel(post, false);
  g0(post, false);
  outp(post, true);
  post->add_option("--k", o.k, "series order for the envelope");
  seed(post);

  auto* rates = app.add_subcommand("rates", "rate or dichotomy study");
  study(rates);
  auto* sub = app.add_subcommand("submodel-qq", "order-K submodel study");
  study(sub);
  auto* hart = app.add_subcommand("hartigan", "expanding-box study");
  study(hart);

  auto* sl = app.add_subcommand("slope", "log-log slope of a metric against n");
  sl->add_option("--records", o.records, "JSONL records")->required();
  sl->add_option("--metric", o.metric, "metric name")->required();
  sl->add_option("--k", o.k, "restrict to submodel order K");
  seed(sl);

  auto* qq = app.add_subcommand("qq", "compare a metric with chi-square(K)");
  qq->add_option("--records", o.records, "JSONL records")->required();
  qq->add_option("--metric", o.metric, "metric name (default lrt)");
  qq->add_option("--k", o.k, "degrees of freedom")->required()->check(CLI::PositiveNumber);
  seed(qq);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  try {
    if (!seed_text.empty()) {
      std::size_t pos = 0;
      o.seed = std::stoull(seed_text, &pos, 0);
      if (pos != seed_text.size()) throw InvalidArgument("--seed: not an integer");
      o.seed_set = true;
    }
    if (fit->parsed()) return cmd_fit(o, out);
    if (div->parsed()) return cmd_divergence(o, out);
    if (lr->parsed()) return cmd_lrt(o, out);
    if (dm->parsed()) return cmd_demix(o, out);
    if (post->parsed()) return cmd_posterior(o, out);
    if (rates->parsed()) return cmd_study(o, StudyKind::Rates, out);
    if (sub->parsed()) return cmd_study(o, StudyKind::SubmodelQQ, out);
    if (hart->parsed()) return cmd_study(o, StudyKind::Hartigan, out);
    if (sl->parsed()) return cmd_slope(o, out);
    if (qq->parsed()) return cmd_qq(o, out);
  } catch (const NumericalError& e) {
    err << "npmle: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "npmle: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "npmle: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace npmle::cli
