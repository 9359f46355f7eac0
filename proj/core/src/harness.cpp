#include "npmle/harness.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "npmle/analysis.hpp"
#include "npmle/density.hpp"
#include "npmle/error.hpp"
#include "npmle/numeric.hpp"
#include "npmle/rng.hpp"

namespace npmle {

using json = nlohmann::json;

std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::Rates: return "rates";
    case StudyKind::Dichotomy: return "dichotomy";
    case StudyKind::SubmodelQQ: return "submodel_qq";
    case StudyKind::Hartigan: return "hartigan";
  }
  return "rates";
}

StudyKind study_kind_from_string(const std::string& s) {
  if (s == "rates") return StudyKind::Rates;
  if (s == "dichotomy") return StudyKind::Dichotomy;
  if (s == "submodel_qq" || s == "submodel-qq") return StudyKind::SubmodelQQ;
  if (s == "hartigan") return StudyKind::Hartigan;
  throw InvalidArgument("unknown study kind '" + s + "'");
}

namespace {

const std::vector<std::string> kRateMetrics = {"nchisq",   "lrt",      "w1",
                                               "post_mse", "loglik_margin", "support_size",
                                               "asy_gap",  "functional_err_mean", "functional_err_cdf"};
const std::vector<std::string> kDichotomyMetrics = {"lrt", "nchisq", "loglik_margin", "support_size"};

bool strictly_increasing(const auto& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i - 1] < v[i])) return false;
  }
  return true;
}

}  // namespace

void ExperimentConfig::validate() const {
  kernel.validate();
  solver.validate();
  if (g0.dim() != kernel.d) throw InvalidArgument("config: g0 dimension does not match the kernel");
  if (!g0.uniform) g0.discrete.check_in(kernel);
  if (n_grid.empty()) throw InvalidArgument("config: empty n grid");
  if (!strictly_increasing(n_grid)) throw InvalidArgument("config: n grid must be strictly increasing");
  if (n_grid.front() < 1) throw InvalidArgument("config: n must be positive");
  if (reps < 1) throw InvalidArgument("config: reps must be positive");
  if (threads < 1) throw InvalidArgument("config: threads must be positive");
  if (atoms < 2) throw InvalidArgument("config: atoms must be at least 2");
  if (study == StudyKind::Rates || study == StudyKind::Dichotomy) {
    for (const auto& m : metrics) {
      if (std::find(kRateMetrics.begin(), kRateMetrics.end(), m) == kRateMetrics.end()) {
        throw InvalidArgument("config: unknown metric '" + m + "'");
      }
    }
  }
  if (study == StudyKind::SubmodelQQ) {
    if (K.empty()) throw InvalidArgument("config: submodel study needs a K list");
    for (int k : K) {
      if (k < 1) throw InvalidArgument("config: K must be positive");
    }
  }
  if (study == StudyKind::Hartigan) {
    if (T.empty() || !strictly_increasing(T) || T.front() <= 0.0) {
      throw InvalidArgument("config: Hartigan study needs an increasing list of positive T");
    }
    if (kernel.d != 1 || kernel.b != 1) throw InvalidArgument("config: Hartigan study is one-dimensional Gaussian");
    if (g0.uniform || g0.discrete.size() != 1) throw InvalidArgument("config: Hartigan study needs a point-mass g0");
  }
}

void apply_fixture(ExperimentConfig& cfg, const std::string& name) {
  cfg.fixture = name;
  cfg.g0 = MixingDescriptor{};
  if (name == "G1") {
    cfg.kernel = KernelSpec::gaussian(-1, 1);
    cfg.g0.discrete = DiscreteMixing::point_mass({0.0});
  } else if (name == "G2") {
    cfg.kernel = KernelSpec::gaussian(-1, 1);
    cfg.g0.discrete = DiscreteMixing({{-0.5}, {0.5}}, {0.6, 0.4});
  } else if (name == "GU") {
    cfg.kernel = KernelSpec::gaussian(-1, 1);
    cfg.g0.uniform = true;
    cfg.g0.box = UniformBox{{-1.0}, {1.0}};
  } else if (name == "P2") {
    cfg.kernel = KernelSpec::poisson(0.5, 4);
    cfg.g0.discrete = DiscreteMixing({{1.0}, {3.0}}, {0.5, 0.5});
  } else {
    throw InvalidArgument("unknown fixture '" + name + "'");
  }
}

ExperimentConfig experiment_config_from_toml(const TomlTable& t) {
  ExperimentConfig cfg;
  std::set<std::string> used;
  const auto get = [&](const std::string& key) -> const TomlValue* {
    const auto it = t.find(key);
    if (it == t.end()) return nullptr;
    used.insert(key);
    return &it->second;
  };
  if (const auto* v = get("study")) cfg.study = study_kind_from_string(v->as_string());
  if (const auto* v = get("fixture")) apply_fixture(cfg, v->as_string());
  if (get("kernel.d") || get("kernel.theta_lo")) {
    KernelSpec k;
    k.theta_lo = get("kernel.theta_lo") ? get("kernel.theta_lo")->as_doubles() : k.theta_lo;
    k.theta_hi = get("kernel.theta_hi") ? get("kernel.theta_hi")->as_doubles() : k.theta_hi;
    k.d = get("kernel.d") ? static_cast<int>(get("kernel.d")->as_int()) : static_cast<int>(k.theta_lo.size());
    k.b = get("kernel.b") ? static_cast<int>(get("kernel.b")->as_int()) : k.d;
    cfg.kernel = k;
  }
  if (get("g0.uniform_lo")) {
    cfg.g0 = MixingDescriptor{};
    cfg.g0.uniform = true;
    cfg.g0.box = UniformBox{get("g0.uniform_lo")->as_doubles(),
                            get("g0.uniform_hi") ? get("g0.uniform_hi")->as_doubles() : std::vector<double>{}};
  } else if (const auto* atoms = get("g0.atoms")) {
    std::vector<Point> pts;
    for (const auto& a : atoms->as_array()) pts.push_back(a.is_array() ? a.as_doubles() : Point{a.as_double()});
    const auto* w = get("g0.weights");
    if (!w) throw InvalidArgument("config: g0.atoms given without g0.weights");
    cfg.g0 = MixingDescriptor{};
    cfg.g0.discrete = DiscreteMixing(pts, w->as_doubles());
  }
  if (const auto* v = get("atoms")) cfg.atoms = static_cast<int>(v->as_int());
  if (const auto* v = get("n")) {
    cfg.n_grid.clear();
    for (const auto& e : v->as_array()) {
      if (e.as_int() < 1) throw InvalidArgument("config: n must be positive");
      cfg.n_grid.push_back(static_cast<std::size_t>(e.as_int()));
    }
  }
  if (const auto* v = get("reps")) cfg.reps = static_cast<int>(v->as_int());
  if (const auto* v = get("seed")) cfg.seed = static_cast<std::uint64_t>(v->as_int());
  if (const auto* v = get("metrics")) {
    for (const auto& e : v->as_array()) cfg.metrics.push_back(e.as_string());
  }
  if (const auto* v = get("K")) {
    for (const auto& e : v->as_array()) cfg.K.push_back(static_cast<int>(e.as_int()));
  }
  if (const auto* v = get("T")) cfg.T = v->as_doubles();
  if (const auto* v = get("c_tol")) cfg.c_tol = v->as_double();
  if (const auto* v = get("threads")) cfg.threads = static_cast<int>(v->as_int());
  if (const auto* v = get("solver.grid_per_dim")) cfg.solver.grid_per_dim = static_cast<int>(v->as_int());
  if (const auto* v = get("solver.tol_gap")) cfg.solver.tol_gap = v->as_double();
  if (const auto* v = get("solver.max_sweeps")) cfg.solver.max_sweeps = static_cast<int>(v->as_int());
  if (const auto* v = get("solver.em_inner")) cfg.solver.em_inner = static_cast<int>(v->as_int());
  if (const auto* v = get("solver.refine_levels")) cfg.solver.refine_levels = static_cast<int>(v->as_int());
  for (const auto& [key, value] : t) {
    if (!used.count(key)) throw InvalidArgument("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return experiment_config_from_toml(parse_toml(in));
}

std::string record_to_jsonl(const RateRecord& r) {
  json m = json::object();
  for (const auto& [k, v] : r.metrics) {
    if (!std::isfinite(v)) throw NumericalError("record: metric '" + k + "' is not finite");
    m[k] = v;
  }
  return json{{"v", 1},          {"study", r.study},   {"n", r.n},       {"n_index", r.n_index},
              {"rep", r.rep},    {"seed", r.seed},     {"K", r.K},       {"T", r.T},
              {"certified", r.certified}, {"c_tol", r.c_tol}, {"atoms", r.atoms}, {"metrics", m}}
      .dump();
}

RateRecord record_from_jsonl(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed record: ") + e.what());
  }
  if (!j.is_object() || !j.contains("v") || j["v"] != 1) throw InvalidArgument("record lacks \"v\": 1");
  try {
    RateRecord r;
    r.study = j.at("study").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.n_index = j.at("n_index").get<int>();
    r.rep = j.at("rep").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.K = j.value("K", 0);
    r.T = j.value("T", 0.0);
    r.certified = j.value("certified", true);
    r.c_tol = j.value("c_tol", 0.0);
    r.atoms = j.value("atoms", 0);
    for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
    return r;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad record: ") + e.what());
  }
}

void sort_records(std::vector<RateRecord>& records) {
  std::sort(records.begin(), records.end(), [](const RateRecord& a, const RateRecord& b) {
    return std::tie(a.study, a.K, a.T, a.n_index, a.rep) < std::tie(b.study, b.K, b.T, b.n_index, b.rep);
  });
}

std::vector<RateRecord> read_records(const std::string& path) {
  std::vector<RateRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_jsonl(line));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  sort_records(out);
  return out;
}

namespace {

using CellKey = std::tuple<std::string, int, double, int, int>;

CellKey key_of(const RateRecord& r) { return {r.study, r.K, r.T, r.n_index, r.rep}; }

class RecordSink {
 public:
  explicit RecordSink(const std::string& path) {
    if (!path.empty()) {
      out_.open(path, std::ios::app);
      if (!out_) throw InvalidArgument("cannot open " + path + " for appending");
    }
  }

  void put(std::vector<RateRecord> recs) {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& r : recs) {
      if (out_.is_open()) {
        out_ << record_to_jsonl(r) << '\n';
      }
      all_.push_back(std::move(r));
    }
    if (out_.is_open()) out_.flush();
  }

  std::vector<RateRecord> take() {
    sort_records(all_);
    return std::move(all_);
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::vector<RateRecord> all_;
};

// Runs fn(cell) for every cell on `threads` workers; the first exception wins.
template <typename Fn>
void parallel_cells(std::size_t count, int threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex err_mu;
  const auto worker = [&] {
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= count) return;
      try {
        fn(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!error) error = std::current_exception();
        next = count;
        return;
      }
    }
  };
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  std::vector<std::thread> pool;
  for (int i = 1; i < t; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct Existing {
  std::set<CellKey> keys;
  std::vector<RateRecord> records;
};

Existing existing_records(const std::string& path, const std::string& study) {
  Existing e;
  if (path.empty()) return e;
  for (auto& r : read_records(path)) {
    if (r.study != study) continue;
    e.keys.insert(key_of(r));
    e.records.push_back(std::move(r));
  }
  return e;
}

std::vector<RateRecord> finish_study(RecordSink& sink, Existing& old, const std::set<CellKey>& wanted) {
  std::vector<RateRecord> out = sink.take();
  for (auto& r : old.records) {
    if (wanted.count(key_of(r))) out.push_back(std::move(r));
  }
  sort_records(out);
  return out;
}

double functional_threshold(const KernelSpec& k) {
  const double mid = 0.5 * (k.theta_lo[0] + k.theta_hi[0]);
  return k.is_gaussian(0) ? mid : std::floor(mid);
}

}  // namespace

std::vector<RateRecord> run_rate_study(const ExperimentConfig& cfg, const std::string& records_path) {
  cfg.validate();
  const std::string study = to_string(cfg.study == StudyKind::Dichotomy ? StudyKind::Dichotomy : StudyKind::Rates);
  std::vector<std::string> metrics = cfg.metrics;
  if (metrics.empty()) metrics = cfg.study == StudyKind::Dichotomy ? kDichotomyMetrics : kRateMetrics;
  const auto wants = [&](const char* m) { return std::find(metrics.begin(), metrics.end(), m) != metrics.end(); };
  const DiscreteMixing g0 = cfg.g0.as_discrete(cfg.atoms);
  const Functional mean_h{FunctionalKind::Mean, 0, 0.0};
  const Functional cdf_h{FunctionalKind::CdfIndicator, 0, functional_threshold(cfg.kernel)};
  const double F0_mean = plugin_functional(g0, cfg.kernel, mean_h);
  const double F0_cdf = plugin_functional(g0, cfg.kernel, cdf_h);

  Existing old = existing_records(records_path, study);
  std::set<CellKey> wanted;
  std::vector<std::pair<int, int>> todo;
  for (int ni = 0; ni < static_cast<int>(cfg.n_grid.size()); ++ni) {
    for (int rep = 0; rep < cfg.reps; ++rep) {
      const CellKey key{study, 0, 0.0, ni, rep};
      wanted.insert(key);
      if (!old.keys.count(key)) todo.emplace_back(ni, rep);
    }
  }
  RecordSink sink(records_path);
  parallel_cells(todo.size(), cfg.threads, [&](std::size_t c) {
    const auto [ni, rep] = todo[c];
    RateRecord r;
    r.study = study;
    r.n = cfg.n_grid[ni];
    r.n_index = ni;
    r.rep = rep;
    r.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(ni), static_cast<std::uint64_t>(rep));
    r.c_tol = cfg.c_tol;
    r.atoms = cfg.g0.uniform ? cfg.atoms : 0;
    const Dataset data = sample(cfg.g0, cfg.kernel, r.n, r.seed);
    const NpmleFit fit = solve(data, cfg.kernel, cfg.solver);
    r.certified = fit.cert.certified;
    const double n = static_cast<double>(r.n);
    const double ll0 = log_likelihood(g0, cfg.kernel, data);
    const double stat = 2.0 * (fit.cert.loglik - ll0);
    double nchisq = 0.0;
    if (wants("nchisq") || wants("asy_gap")) nchisq = n * chi_square(fit.g, g0, cfg.kernel);
    if (wants("nchisq")) r.metrics["nchisq"] = nchisq;
    if (wants("lrt")) r.metrics["lrt"] = stat;
    if (wants("asy_gap")) r.metrics["asy_gap"] = std::abs(nchisq - stat);
    if (wants("w1")) r.metrics["w1"] = wasserstein1(fit.g, g0);
    if (wants("post_mse")) r.metrics["post_mse"] = posterior_mean_mse(fit.g, g0, cfg.kernel);
    if (wants("loglik_margin")) r.metrics["loglik_margin"] = fit.cert.loglik - ll0 - cfg.c_tol;
    if (wants("support_size")) r.metrics["support_size"] = static_cast<double>(fit.g.size());
    if (wants("functional_err_mean")) {
      r.metrics["functional_err_mean"] = std::sqrt(n) * std::abs(plugin_functional(fit.g, cfg.kernel, mean_h) - F0_mean);
    }
    if (wants("functional_err_cdf")) {
      r.metrics["functional_err_cdf"] = std::sqrt(n) * std::abs(plugin_functional(fit.g, cfg.kernel, cdf_h) - F0_cdf);
    }
    sink.put({std::move(r)});
  });
  return finish_study(sink, old, wanted);
}

std::vector<RateRecord> run_submodel_qq(const ExperimentConfig& cfg, const std::string& records_path) {
  cfg.validate();
  const std::string study = to_string(StudyKind::SubmodelQQ);
  const DiscreteMixing g0 = cfg.g0.as_discrete(cfg.atoms);
  const int kmax = *std::max_element(cfg.K.begin(), cfg.K.end());
  // q_1..q_K do not depend on how many further polynomials follow, so one
  // basis, one design and one Gram matrix serve every K.
  const OrthoBasis full = orthonormal_basis(g0, kmax);
  const std::vector<double> gram = submodel_gram(full, g0, cfg.kernel);
  const auto truncate_basis = [&](int K) {
    OrthoBasis b = full;
    b.K = K;
    b.polys.resize(K + 1);
    if (!b.gram.empty()) b.gram.clear();
    return b;
  };

  Existing old = existing_records(records_path, study);
  std::set<CellKey> wanted;
  std::vector<std::pair<int, int>> todo;
  for (int ni = 0; ni < static_cast<int>(cfg.n_grid.size()); ++ni) {
    for (int rep = 0; rep < cfg.reps; ++rep) {
      bool all = true;
      for (int K : cfg.K) {
        const CellKey key{study, K, 0.0, ni, rep};
        wanted.insert(key);
        all &= old.keys.count(key) > 0;
      }
      if (!all) todo.emplace_back(ni, rep);
    }
  }
  RecordSink sink(records_path);
  parallel_cells(todo.size(), cfg.threads, [&](std::size_t c) {
    const auto [ni, rep] = todo[c];
    const std::size_t n = cfg.n_grid[ni];
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(ni), static_cast<std::uint64_t>(rep));
    const Dataset data = sample(cfg.g0, cfg.kernel, n, seed);
    const SubmodelDesign design = submodel_design(data, g0, cfg.kernel, full);
    std::vector<RateRecord> out;
    for (int K : cfg.K) {
      if (old.keys.count(CellKey{study, K, 0.0, ni, rep})) continue;
      SubmodelDesign dk;
      dk.n = design.n;
      dk.K = K;
      dk.loglik_g0 = design.loglik_g0;
      dk.h.resize(n * K);
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(design.h.begin() + i * kmax, K, dk.h.begin() + i * K);
      }
      const SubmodelFit fit = solve_submodel(dk, g0, truncate_basis(K));
      double quad = 0.0;
      for (int a = 0; a < K; ++a) {
        for (int b = 0; b < K; ++b) quad += fit.coeffs[a] * gram[a * kmax + b] * fit.coeffs[b];
      }
      RateRecord r;
      r.study = study;
      r.n = n;
      r.n_index = ni;
      r.rep = rep;
      r.seed = seed;
      r.K = K;
      r.c_tol = cfg.c_tol;
      r.atoms = cfg.g0.uniform ? cfg.atoms : 0;
      r.certified = true;
      r.metrics["lrt"] = 2.0 * (fit.loglik - fit.loglik_g0);
      r.metrics["nchisq"] = static_cast<double>(n) * quad;
      r.metrics["grad_norm"] = fit.grad_norm;
      out.push_back(std::move(r));
    }
    sink.put(std::move(out));
  });
  return finish_study(sink, old, wanted);
}

std::vector<RateRecord> run_hartigan(const ExperimentConfig& cfg, const std::string& records_path) {
  cfg.validate();
  const std::string study = to_string(StudyKind::Hartigan);
  const DiscreteMixing g0 = cfg.g0.discrete;
  Existing old = existing_records(records_path, study);
  std::set<CellKey> wanted;
  std::vector<std::tuple<int, int, int>> todo;
  for (int ti = 0; ti < static_cast<int>(cfg.T.size()); ++ti) {
    for (int ni = 0; ni < static_cast<int>(cfg.n_grid.size()); ++ni) {
      for (int rep = 0; rep < cfg.reps; ++rep) {
        const CellKey key{study, 0, cfg.T[ti], ni, rep};
        wanted.insert(key);
        if (!old.keys.count(key)) todo.emplace_back(ti, ni, rep);
      }
    }
  }
  RecordSink sink(records_path);
  parallel_cells(todo.size(), cfg.threads, [&](std::size_t c) {
    const auto [ti, ni, rep] = todo[c];
    const double T = cfg.T[ti];
    const KernelSpec box = KernelSpec::gaussian(-T, T);
    // Common random numbers across T: the sample ignores the box.
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(ni), static_cast<std::uint64_t>(rep));
    const Dataset data = sample(g0, box, cfg.n_grid[ni], seed);
    SolverConfig sc = cfg.solver;
    // Keep the base spacing fixed as the box grows.
    sc.grid_per_dim = std::max(sc.grid_per_dim,
                               static_cast<int>(std::ceil((sc.grid_per_dim - 1) * T / cfg.T.front())) + 1);
    const NpmleFit fit = solve(data, box, sc);
    RateRecord r;
    r.study = study;
    r.n = cfg.n_grid[ni];
    r.n_index = ni;
    r.rep = rep;
    r.seed = seed;
    r.T = T;
    r.c_tol = cfg.c_tol;
    r.certified = fit.cert.certified;
    r.metrics["lrt"] = 2.0 * (fit.cert.loglik - log_likelihood(g0, box, data));
    r.metrics["support_size"] = static_cast<double>(fit.g.size());
    double reach = 0.0;
    for (std::size_t j = 0; j < fit.g.size(); ++j) reach = std::max(reach, std::abs(fit.g.atom(j)[0]));
    r.metrics["max_abs_atom"] = reach;
    sink.put({std::move(r)});
  });
  return finish_study(sink, old, wanted);
}

std::vector<RateRecord> run_study(const ExperimentConfig& cfg, const std::string& records_path) {
  switch (cfg.study) {
    case StudyKind::Rates:
    case StudyKind::Dichotomy: return run_rate_study(cfg, records_path);
    case StudyKind::SubmodelQQ: return run_submodel_qq(cfg, records_path);
    case StudyKind::Hartigan: return run_hartigan(cfg, records_path);
  }
  return {};
}

namespace {

double statistic(std::vector<double> v, Statistic s) {
  switch (s) {
    case Statistic::Median: return median(std::move(v));
    case Statistic::Q95: return quantile(std::move(v), 0.95);
    case Statistic::Mean: {
      CompensatedSum acc;
      for (double x : v) acc.add(x);
      return acc.value() / static_cast<double>(v.size());
    }
  }
  return 0.0;
}

std::map<double, std::vector<double>> grouped(const std::vector<RateRecord>& records, const Selector& sel) {
  std::map<double, std::vector<double>> by_n;
  for (const auto& r : records) {
    if (sel.K >= 0 && r.K != sel.K) continue;
    if (sel.T >= 0 && r.T != sel.T) continue;
    if (sel.certified_only && !r.certified) continue;
    const auto it = r.metrics.find(sel.metric);
    if (it == r.metrics.end()) continue;
    by_n[static_cast<double>(r.n)].push_back(it->second);
  }
  return by_n;
}

std::pair<double, double> least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double m = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace

std::vector<CellStat> cell_statistics(const std::vector<RateRecord>& records, const Selector& sel, Statistic stat) {
  std::vector<CellStat> out;
  for (auto& [n, vals] : grouped(records, sel)) out.push_back({n, statistic(vals, stat), vals.size()});
  return out;
}

SlopeFit fit_slope(const std::vector<RateRecord>& records, const Selector& sel, Statistic stat, int resamples,
                   std::uint64_t boot_seed) {
  const auto by_n = grouped(records, sel);
  SlopeFit fit;
  std::vector<std::pair<double, const std::vector<double>*>> usable;
  for (const auto& [n, vals] : by_n) {
    const double s = statistic(vals, stat);
    fit.cells.push_back({n, s, vals.size()});
    if (s > 0.0 && std::isfinite(s)) {
      usable.emplace_back(n, &vals);
    } else {
      fit.bad_cells.push_back(n);
    }
  }
  if (usable.size() < 3) {
    throw InvalidArgument("fit_slope: need at least 3 values of n with a positive statistic for '" + sel.metric + "'");
  }
  std::vector<double> lx, ly;
  for (const auto& [n, vals] : usable) {
    lx.push_back(std::log(n));
    ly.push_back(std::log(statistic(*vals, stat)));
  }
  std::tie(fit.slope, fit.intercept) = least_squares(lx, ly);
  CounterRng rng(boot_seed);
  std::vector<double> slopes;
  std::vector<double> resample;
  for (int b = 0; b < resamples; ++b) {
    std::vector<double> by;
    bool ok = true;
    for (const auto& [n, vals] : usable) {
      resample.resize(vals->size());
      for (double& v : resample) {
        const auto idx = std::min(vals->size() - 1, static_cast<std::size_t>(rng.uniform() * vals->size()));
        v = (*vals)[idx];
      }
      const double s = statistic(resample, stat);
      if (!(s > 0.0)) {
        ok = false;
        break;
      }
      by.push_back(std::log(s));
    }
    if (ok) slopes.push_back(least_squares(lx, by).first);
  }
  if (!slopes.empty()) {
    fit.ci_lo = quantile(slopes, 0.025);
    fit.ci_hi = quantile(slopes, 0.975);
  } else {
    fit.ci_lo = fit.ci_hi = fit.slope;
  }
  return fit;
}

double chisq_cdf(double x, int K) {
  if (K < 1) throw InvalidArgument("chi-square: K must be positive");
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(0.5 * K, 0.5 * x);
}

double chisq_quantile(double p, int K) {
  if (K < 1) throw InvalidArgument("chi-square: K must be positive");
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("chi-square quantile: p must lie in (0, 1)");
  return 2.0 * boost::math::gamma_p_inv(0.5 * K, p);
}

QQResult qq_against_chisq(const std::vector<double>& samples, int K) {
  if (samples.size() < 200) throw InvalidArgument("qq: need at least 200 samples");
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  QQResult q;
  const double m = static_cast<double>(s.size());
  CompensatedSum acc;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double F = chisq_cdf(s[i], K);
    q.ks = std::max({q.ks, (i + 1) / m - F, F - i / m});
    acc.add(s[i]);
  }
  q.mean = acc.value() / m;
  for (int k = 0; k < 9; ++k) {
    q.sample_deciles[k] = quantile(s, 0.1 * (k + 1));
    q.chisq_deciles[k] = chisq_quantile(0.1 * (k + 1), K);
  }
  return q;
}

void write_summary_csv(const std::vector<RateRecord>& records, const std::string& path) {
  std::map<std::tuple<std::string, double>, std::vector<double>> cells;
  for (const auto& r : records) {
    for (const auto& [m, v] : r.metrics) {
      std::string label = m;
      if (r.K > 0) label += "[K=" + std::to_string(r.K) + "]";
      if (r.T > 0) {
        std::ostringstream t;
        t << r.T;
        label += "[T=" + t.str() + "]";
      }
      cells[{label, static_cast<double>(r.n)}].push_back(v);
    }
  }
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out.precision(17);
  out << "n,metric,median,q25,q75\n";
  for (const auto& [key, vals] : cells) {
    out << std::get<1>(key) << ',' << std::get<0>(key) << ',' << median(vals) << ',' << quantile(vals, 0.25) << ','
        << quantile(vals, 0.75) << '\n';
  }
  if (!out) throw NumericalError("write failed: " + path);
}

}  // namespace npmle
