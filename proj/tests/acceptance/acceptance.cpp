// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// The exit status counts failures that were not declared with --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "npmle/harness.hpp"

using namespace npmle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

class Runner {
 public:
  Runner(fs::path dir, int threads) : dir_(std::move(dir)), threads_(threads) {}

  ExperimentConfig config(StudyKind kind, const std::string& fixture) const {
    ExperimentConfig c;
    c.study = kind;
    apply_fixture(c, fixture);
    c.threads = threads_;
    return c;
  }

  std::vector<RateRecord> run(const ExperimentConfig& c, const std::string& name) const {
    const auto t0 = std::chrono::steady_clock::now();
    auto recs = run_study(c, (dir_ / (name + ".jsonl")).string());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  [" << name << "] " << recs.size() << " records in " << fmt(secs) << " s\n";
    seconds_[name] = secs;
    return recs;
  }

  double seconds(const std::string& name) const { return seconds_.at(name); }

 private:
  fs::path dir_;
  int threads_;
  mutable std::map<std::string, double> seconds_;
};

double stat_at(const std::vector<RateRecord>& recs, Selector sel, double n, Statistic s = Statistic::Median) {
  for (const auto& c : cell_statistics(recs, sel, s)) {
    if (c.n == n) return c.value;
  }
  throw std::runtime_error("no cell for " + sel.metric + " at " + fmt(n));
}

std::vector<double> samples(const std::vector<RateRecord>& recs, const std::string& metric, int K) {
  std::vector<double> v;
  for (const auto& r : recs) {
    if (r.K == K) v.push_back(r.metrics.at(metric));
  }
  return v;
}

Outcome rate_flat(const std::vector<RateRecord>& recs, double secs) {
  const SlopeFit f = fit_slope(recs, {"nchisq"});
  const double ratio = f.cells.back().value / f.cells.front().value;
  Outcome o;
  o.pass = std::abs(f.slope) <= 0.25 && ratio <= 3.0 && secs <= 600.0;
  o.detail = "slope=" + fmt(f.slope) + " ci=[" + fmt(f.ci_lo) + "," + fmt(f.ci_hi) + "] median(n=" +
             fmt(f.cells.back().n) + ")/median(n=" + fmt(f.cells.front().n) + ")=" + fmt(ratio) +
             " runtime=" + fmt(secs) + "s";
  return o;
}

Outcome slope_in(const std::vector<RateRecord>& recs, const std::string& metric, double lo, double hi) {
  const SlopeFit f = fit_slope(recs, {metric});
  return {f.slope >= lo && f.slope <= hi,
          metric + " slope=" + fmt(f.slope) + " ci=[" + fmt(f.ci_lo) + "," + fmt(f.ci_hi) + "] target [" + fmt(lo) +
              "," + fmt(hi) + "]"};
}

int run_suite(const std::string& spec) {
  const auto eq = spec.find('=');
  const std::string exe = spec.substr(0, eq);
  const std::string filter = eq == std::string::npos ? "*" : spec.substr(eq + 1);
  const std::string cmd = "\"" + exe + "\" --gtest_brief=1 --gtest_filter=" + filter;
  return std::system(cmd.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"npmle acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "npmle_acceptance").string();
  std::vector<int> expect_fail;
  std::vector<std::string> suites;
  std::vector<int> only;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool keep = false;
  app.add_option("--work", work, "Directory for study records");
  app.add_option("--expect-fail", expect_fail, "Criteria known to fail, with analysis on record");
  app.add_option("--suite", suites, "Property suite as <executable>=<gtest filter>");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--threads", threads);
  app.add_flag("--keep", keep, "Reuse records already in the work directory");
  CLI11_PARSE(app, argc, argv);

  if (!keep) fs::remove_all(work);
  fs::create_directories(work);
  const Runner runner(work, threads);
  const std::set<int> expected(expect_fail.begin(), expect_fail.end());
  const auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  int unexpected = 0;
  const auto report = [&](int id, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool known = expected.count(id) > 0;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL");
    if (!o.pass && known) std::cout << " (expected)";
    std::cout << "  " << o.detail << std::endl;
    if (!o.pass && !known) ++unexpected;
  };

  std::vector<RateRecord> g2;
  const auto g2_records = [&]() -> const std::vector<RateRecord>& {
    if (g2.empty()) g2 = runner.run(runner.config(StudyKind::Rates, "G2"), "g2_rates");
    return g2;
  };

  report(1, [&] {
    const auto& recs = g2_records();
    return rate_flat(recs, runner.seconds("g2_rates"));
  });

  report(2, [&] {
    const auto p2 = runner.run(runner.config(StudyKind::Rates, "P2"), "p2_rates");
    return rate_flat(p2, runner.seconds("p2_rates"));
  });

  report(3, [&] { return slope_in(g2_records(), "w1", -0.40, -0.12); });

  report(4, [&] { return slope_in(g2_records(), "post_mse", -1.25, -0.75); });

  report(5, [&] {
    const SlopeFit m = fit_slope(g2_records(), {"functional_err_mean"});
    const SlopeFit c = fit_slope(g2_records(), {"functional_err_cdf"});
    return Outcome{std::abs(m.slope) <= 0.25 && std::abs(c.slope) <= 0.25,
                   "mean slope=" + fmt(m.slope) + " cdf slope=" + fmt(c.slope)};
  });

  report(6, [&] {
    auto cfg = runner.config(StudyKind::Dichotomy, "G2");
    cfg.n_grid = {500, 8000};
    cfg.reps = 500;
    const auto recs = runner.run(cfg, "g2_dichotomy");
    const double lo = stat_at(recs, {"lrt"}, 500, Statistic::Q95);
    const double hi = stat_at(recs, {"lrt"}, 8000, Statistic::Q95);
    return Outcome{hi <= 1.5 * lo, "q95(n=500)=" + fmt(lo) + " q95(n=8000)=" + fmt(hi) + " ratio=" + fmt(hi / lo)};
  });

  report(7, [&] {
    auto cfg = runner.config(StudyKind::SubmodelQQ, "GU");
    cfg.n_grid = {5000};
    cfg.reps = 500;
    cfg.K = {1, 2, 4, 8};
    const auto recs = runner.run(cfg, "gu_submodel_k1248");
    Outcome o{true, ""};
    double prev = -1.0;
    for (int K : cfg.K) {
      Selector sel{"lrt"};
      sel.K = K;
      const double med = stat_at(recs, sel, 5000);
      const double q25 = chisq_quantile(0.25, K), q75 = chisq_quantile(0.75, K);
      const bool ok = med > prev && med >= q25 && med <= q75;
      o.pass = o.pass && ok;
      o.detail += "K=" + std::to_string(K) + ":" + fmt(med) + " in [" + fmt(q25) + "," + fmt(q75) + "]" +
                  (ok ? "" : "!") + " ";
      prev = med;
    }
    return o;
  });

  report(8, [&] {
    auto cfg = runner.config(StudyKind::SubmodelQQ, "GU");
    cfg.n_grid = {5000};
    cfg.reps = 2000;
    cfg.K = {1, 3};
    const auto recs = runner.run(cfg, "gu_submodel_k13");
    Outcome o{true, ""};
    for (int K : cfg.K) {
      const double ks_lrt = qq_against_chisq(samples(recs, "lrt", K), K).ks;
      const double ks_chi = qq_against_chisq(samples(recs, "nchisq", K), K).ks;
      o.pass = o.pass && ks_lrt <= 0.05 && ks_chi <= 0.05;
      o.detail += "K=" + std::to_string(K) + " ks(2dLL)=" + fmt(ks_lrt) + " ks(n chi2)=" + fmt(ks_chi) + " ";
    }
    return o;
  });

  report(9, [&] {
    const auto& recs = g2_records();
    const double a500 = stat_at(recs, {"asy_gap"}, 500);
    const double a4000 = stat_at(recs, {"asy_gap"}, 4000);
    const double c4000 = stat_at(recs, {"nchisq"}, 4000);
    return Outcome{a4000 < a500 && a4000 < 0.5 * c4000,
                   "asy_gap(500)=" + fmt(a500) + " asy_gap(4000)=" + fmt(a4000) + " n chi2(4000)=" + fmt(c4000)};
  });

  report(10, [&] {
    auto cfg = runner.config(StudyKind::Hartigan, "G1");
    cfg.n_grid = {2000};
    cfg.T = {2, 4, 8, 16};
    const auto recs = runner.run(cfg, "g1_hartigan");
    std::vector<double> med;
    Outcome o{true, "medians"};
    for (double T : cfg.T) {
      Selector sel{"lrt"};
      sel.T = T;
      const auto cells = cell_statistics(recs, sel);
      if (cells.size() != 1) throw std::runtime_error("expected one cell per T");
      med.push_back(cells.front().value);
      o.detail += " T=" + fmt(T) + ":" + fmt(med.back());
      if (med.size() > 1 && med.back() < med[med.size() - 2]) o.pass = false;
    }
    o.pass = o.pass && med.back() - med.front() > 1.0;
    o.detail += " last-first=" + fmt(med.back() - med.front());
    return o;
  });

  report(11, [&] {
    if (suites.empty()) return Outcome{false, "no property suites given"};
    const auto t0 = std::chrono::steady_clock::now();
    int failed = 0;
    for (const auto& s : suites) failed += run_suite(s) != 0;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return Outcome{failed == 0 && secs < 60.0, std::to_string(suites.size() - failed) + "/" +
                                                   std::to_string(suites.size()) + " suites passed in " +
                                                   fmt(secs) + " s"};
  });

  return unexpected;
}
