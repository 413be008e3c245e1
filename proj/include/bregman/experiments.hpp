#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bregman/rng.hpp"
#include "bregman/solvers.hpp"

namespace bregman {

enum class ExperimentKind { is_mirror, dc_svm, sparse_reg, robust_reg, accel_compare, invariants };
enum class DesignKind { uniform01, gaussian_ar };

ExperimentKind parse_experiment(const std::string& name);
std::string experiment_name(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::is_mirror;
  int n = 0;  // 0 picks the experiment default (desk scale, or paper scale below)
  int p = 0;
  std::uint64_t seed = 42;
  int replications = 0;  // random starts, or data replications for sparse-reg
  double noise_sigma2 = 10.0;
  DesignKind design = DesignKind::uniform01;
  double design_r = 0.15;
  std::vector<double> beta_star;  // leading entries; zero-padded to p
  double lambda_a = 2.0;          // the constant A in lambda = A sigma sqrt(log(ep))
  int iters = 0;
  std::string out_dir;
  bool paper_scale = false;
  std::string accel_base = "is-mirror";  // accel-compare: is-mirror | robust-reg
  int threads = 0;                       // 0 = hardware concurrency
  bool wall_clock = false;  // fill wall_ns (opt-in: breaks byte-identical output)
};

// Parse flat key=value lines (comments start with '#'). Unknown keys throw.
void apply_config_file(ExperimentConfig* cfg, const std::string& path);

struct TraceRow {
  int run_id = 0;
  int iter = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double opt_error = std::numeric_limits<double>::quiet_NaN();
  double stat_error = std::numeric_limits<double>::quiet_NaN();
  double theta = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
  double r_t = std::numeric_limits<double>::quiet_NaN();
  int searches_used = -1;
  long long wall_ns = -1;
};

// Fixed-schema trace table. Metadata lines precede the header as '# key=value';
// NaN / negative sentinels serialize as empty fields; numbers carry 17
// significant digits.
struct TraceCsv {
  static constexpr const char* kHeader =
      "run_id,iter,objective,opt_error,stat_error,theta,rho,R_t,searches_used,wall_ns";

  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<TraceRow> rows;

  void sort_rows();  // by (run_id, iter)
  std::string to_string() const;
  void write(const std::string& path) const;
};

struct ExperimentResult {
  std::vector<std::pair<std::string, TraceCsv>> tables;  // name -> table
  std::vector<std::pair<std::string, std::string>> summary;
  bool gates_passed = true;
};

// Writes each table as <out_dir>/<name>.csv plus <out_dir>/summary.txt.
void write_result(const ExperimentResult& result, const std::string& out_dir);

// U(0,1) entries, or rows from N(0, Sigma) with Sigma_ij = r^|i-j| through the
// Cholesky factor of the AR(1) covariance.
MatrixXd gen_design(int n, int p, DesignKind design, std::uint64_t seed, double r = 0.15);
MatrixXd gen_design(int n, int p, DesignKind design, Rng& rng, double r = 0.15);

// Least-squares slope of log(series) against log(t) over t in [t_lo, t_hi]
// (series[i] sits at t = i + 1). Nonpositive values are dropped;
// dropped_count reports how many. Fewer than 3 usable points throws.
double fit_loglog_slope(const std::vector<double>& series, int t_lo, int t_hi,
                        int* dropped_count = nullptr);

// Running average avg_{t <= k} of the per-step error terms of one run's rows.
std::vector<double> running_average(const std::vector<double>& terms);

ExperimentResult run_is_mirror(const ExperimentConfig& cfg);
ExperimentResult run_dc_svm(const ExperimentConfig& cfg);
ExperimentResult run_sparse_reg(const ExperimentConfig& cfg);
ExperimentResult run_robust_reg(const ExperimentConfig& cfg);
ExperimentResult run_accel_compare(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace bregman
