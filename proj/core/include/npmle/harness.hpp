#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "npmle/kernel.hpp"
#include "npmle/mixing.hpp"
#include "npmle/npmle.hpp"
#include "npmle/toml_lite.hpp"

namespace npmle {

enum class StudyKind { Rates, Dichotomy, SubmodelQQ, Hartigan };

std::string to_string(StudyKind k);
StudyKind study_kind_from_string(const std::string& s);

struct ExperimentConfig {
  StudyKind study = StudyKind::Rates;
  std::string fixture;  // G1, G2, GU, P2, or empty for an explicit kernel and g0
  KernelSpec kernel;
  MixingDescriptor g0;
  int atoms = 512;  // discretization of a uniform g0
  std::vector<std::size_t> n_grid{250, 500, 1000, 2000, 4000};
  int reps = 200;
  std::uint64_t seed = 20240901;
  SolverConfig solver;
  std::vector<std::string> metrics;  // empty: every metric the study knows
  std::vector<int> K;                // submodel orders
  std::vector<double> T;             // Hartigan half-widths
  double c_tol = 0.0;                // tolerance c in G_n(c)
  int threads = 1;

  void validate() const;
};

// Frozen fixtures: G1 = δ_0 and G2 = 0.6δ_{−0.5} + 0.4δ_{0.5} on [−1,1];
// GU = Uniform[−1,1]; P2 = 0.5δ_1 + 0.5δ_3, Poisson on [0.5,4].
void apply_fixture(ExperimentConfig& cfg, const std::string& name);

ExperimentConfig experiment_config_from_toml(const TomlTable& t);
ExperimentConfig load_experiment_config(const std::string& path);

struct RateRecord {
  std::string study;
  std::size_t n = 0;
  int n_index = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  int K = 0;         // submodel order, 0 otherwise
  double T = 0.0;    // Hartigan half-width, 0 otherwise
  bool certified = true;
  double c_tol = 0.0;
  int atoms = 0;     // discretization level of g0 (0 when g0 is atomic)
  std::map<std::string, double> metrics;
};

// One JSON object per line with "v": 1.
std::string record_to_jsonl(const RateRecord& r);
RateRecord record_from_jsonl(const std::string& line);
// Canonical order: study, K, T, n_index, rep.
std::vector<RateRecord> read_records(const std::string& path);
void sort_records(std::vector<RateRecord>& records);

// Each study appends every new record to `records_path` (when nonempty) and
// skips cells already present there. The return value holds all cells of the
// config, old and new, in canonical order.
std::vector<RateRecord> run_rate_study(const ExperimentConfig& cfg, const std::string& records_path = "");
std::vector<RateRecord> run_submodel_qq(const ExperimentConfig& cfg, const std::string& records_path = "");
std::vector<RateRecord> run_hartigan(const ExperimentConfig& cfg, const std::string& records_path = "");
std::vector<RateRecord> run_study(const ExperimentConfig& cfg, const std::string& records_path = "");

// Rows of (n, value) for a metric, optionally restricted to one K or T.
struct Selector {
  std::string metric;
  int K = -1;
  double T = -1.0;
  bool certified_only = false;
};

enum class Statistic { Median, Mean, Q95 };

struct CellStat {
  double n = 0.0;  // or T for Hartigan selections
  double value = 0.0;
  std::size_t count = 0;
};

std::vector<CellStat> cell_statistics(const std::vector<RateRecord>& records, const Selector& sel,
                                      Statistic stat = Statistic::Median);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::vector<CellStat> cells;
  std::vector<double> bad_cells;  // n values whose statistic was not positive
};

// Least squares slope of log stat(metric | n) on log n, with a 1000-resample
// bootstrap percentile interval (reps resampled within each n).
SlopeFit fit_slope(const std::vector<RateRecord>& records, const Selector& sel,
                   Statistic stat = Statistic::Median, int resamples = 1000,
                   std::uint64_t boot_seed = 0xb007);

double chisq_cdf(double x, int K);
double chisq_quantile(double p, int K);

struct QQResult {
  double ks = 0.0;
  double mean = 0.0;
  std::array<double, 9> sample_deciles{};
  std::array<double, 9> chisq_deciles{};
};

QQResult qq_against_chisq(const std::vector<double>& samples, int K);

// Columns: n, metric, median, q25, q75 (metric labels carry K or T when set).
void write_summary_csv(const std::vector<RateRecord>& records, const std::string& path);

}  // namespace npmle
