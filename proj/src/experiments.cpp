#include "bregman/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "bregman/accel.hpp"
#include "bregman/util.hpp"

namespace bregman {

namespace {

constexpr double kBoundSlack = 1e-9;  // surrogate-decrease inequality slack

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Per-run arrays padded to a fixed horizon. After convergence the iterate is
// a fixed point, so the remaining error terms are exactly zero and the
// objective holds its final value.
struct RunSeries {
  std::vector<double> objective;   // length iters + 1
  std::vector<double> opt_terms;   // length iters
  std::vector<double> stat_error;  // length iters + 1 (NaN when unavailable)
  std::vector<double> theta, rho, r_t;  // per accepted step, length iters (NaN pad)
  std::vector<int> searches;            // length iters (-1 pad)
  VectorXd final_beta;
  int steps = 0;
  bool converged = false;
};

RunSeries pad_trace(const IterateTrace& trace, int iters) {
  RunSeries s;
  const int recorded = static_cast<int>(trace.records.size());
  if (recorded == 0) throw Error("pad_trace: empty trace");
  s.objective.resize(iters + 1);
  s.stat_error.resize(iters + 1);
  s.opt_terms.assign(iters, 0.0);
  s.theta.assign(iters, std::numeric_limits<double>::quiet_NaN());
  s.rho.assign(iters, std::numeric_limits<double>::quiet_NaN());
  s.r_t.assign(iters, std::numeric_limits<double>::quiet_NaN());
  s.searches.assign(iters, -1);
  for (int k = 0; k <= iters; ++k) {
    const auto& rec = trace.records[std::min(k, recorded - 1)];
    s.objective[k] = rec.objective;
    s.stat_error[k] = rec.stat_error;
  }
  for (int k = 0; k < std::min(recorded - 1, iters); ++k) {
    s.opt_terms[k] = trace.records[k].opt_error;
  }
  for (int k = 1; k < std::min(recorded, iters + 1); ++k) {
    const auto& rec = trace.records[k];
    s.theta[k - 1] = rec.theta;
    s.rho[k - 1] = rec.rho;
    s.r_t[k - 1] = rec.r_t;
    s.searches[k - 1] = rec.searches_used;
  }
  s.final_beta = trace.final_beta;
  s.steps = trace.iterations;
  s.converged = trace.converged;
  return s;
}

void require_decrease_bound(const IterateTrace& trace, const std::string& context) {
  const double v = trace.max_bound_violation();
  if (std::isnan(v)) return;
  if (v > kBoundSlack) {
    throw Error(context + ": surrogate decrease bound violated by " + format_double(v));
  }
}

void append_rows(TraceCsv* csv, const RunSeries& s, int run_id, bool with_opt, bool with_accel) {
  const int iters = static_cast<int>(s.opt_terms.size());
  for (int k = 0; k <= iters; ++k) {
    TraceRow row;
    row.run_id = run_id;
    row.iter = k;
    row.objective = s.objective[k];
    row.stat_error = s.stat_error[k];
    if (with_opt && k < iters) row.opt_error = s.opt_terms[k];
    if (with_accel && k >= 1) {
      row.theta = s.theta[k - 1];
      row.rho = s.rho[k - 1];
      row.r_t = s.r_t[k - 1];
      row.searches_used = s.searches[k - 1];
    }
    csv->rows.push_back(row);
  }
}

std::string bool_word(bool b) { return b ? "pass" : "fail"; }

void add_meta(TraceCsv* csv, const ExperimentConfig& cfg, int n, int p, int iters, int reps) {
  csv->metadata.emplace_back("experiment", experiment_name(cfg.experiment));
  csv->metadata.emplace_back("n", std::to_string(n));
  csv->metadata.emplace_back("p", std::to_string(p));
  csv->metadata.emplace_back("seed", std::to_string(cfg.seed));
  csv->metadata.emplace_back("replications", std::to_string(reps));
  csv->metadata.emplace_back("iters", std::to_string(iters));
}

struct IsInstance {
  MatrixXd x;
  VectorXd y;
  VectorXd beta_star;
  int floored = 0;
};

IsInstance make_is_instance(int n, int p, std::uint64_t seed, double sigma2) {
  Rng data(seed);
  IsInstance inst;
  inst.x.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) inst.x(i, j) = data.uniform();
  }
  inst.beta_star.resize(p);
  for (int j = 0; j < p; ++j) inst.beta_star[j] = data.uniform(0.0, 5.0);
  const double sigma = std::sqrt(sigma2);
  inst.y = inst.x * inst.beta_star;
  for (int i = 0; i < n; ++i) {
    inst.y[i] += data.normal(0.0, sigma);
    if (inst.y[i] < 1e-6) {
      inst.y[i] = 1e-6;
      ++inst.floored;
    }
  }
  return inst;
}

double quantile_sorted(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double idx = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (idx - lo) * (v[hi] - v[lo]);
}

}  // namespace

ExperimentKind parse_experiment(const std::string& name) {
  if (name == "is-mirror") return ExperimentKind::is_mirror;
  if (name == "dc-svm") return ExperimentKind::dc_svm;
  if (name == "sparse-reg") return ExperimentKind::sparse_reg;
  if (name == "robust-reg") return ExperimentKind::robust_reg;
  if (name == "accel-compare") return ExperimentKind::accel_compare;
  if (name == "invariants") return ExperimentKind::invariants;
  throw ConfigError("unknown experiment: " + name);
}

std::string experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::is_mirror: return "is-mirror";
    case ExperimentKind::dc_svm: return "dc-svm";
    case ExperimentKind::sparse_reg: return "sparse-reg";
    case ExperimentKind::robust_reg: return "robust-reg";
    case ExperimentKind::accel_compare: return "accel-compare";
    case ExperimentKind::invariants: return "invariants";
  }
  return "unknown";
}

void apply_config_file(ExperimentConfig* cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key == "experiment") {
      cfg->experiment = parse_experiment(value);
    } else if (key == "n") {
      cfg->n = std::stoi(value);
    } else if (key == "p") {
      cfg->p = std::stoi(value);
    } else if (key == "seed") {
      cfg->seed = std::stoull(value);
    } else if (key == "replications") {
      cfg->replications = std::stoi(value);
    } else if (key == "noise_sigma2") {
      cfg->noise_sigma2 = std::stod(value);
    } else if (key == "design") {
      if (value == "uniform01") {
        cfg->design = DesignKind::uniform01;
      } else if (value.rfind("gaussian_ar", 0) == 0) {
        cfg->design = DesignKind::gaussian_ar;
        const auto open = value.find('(');
        const auto close = value.find(')');
        if (open != std::string::npos && close != std::string::npos && close > open) {
          cfg->design_r = std::stod(value.substr(open + 1, close - open - 1));
        }
      } else {
        throw ConfigError("unknown design: " + value);
      }
    } else if (key == "beta_star") {
      cfg->beta_star.clear();
      std::istringstream ss(value);
      std::string tok;
      while (std::getline(ss, tok, ',')) cfg->beta_star.push_back(std::stod(tok));
    } else if (key == "lambda_A") {
      cfg->lambda_a = std::stod(value);
    } else if (key == "iters") {
      cfg->iters = std::stoi(value);
    } else if (key == "out_dir") {
      cfg->out_dir = value;
    } else if (key == "paper_scale") {
      cfg->paper_scale = value == "1" || value == "true";
    } else if (key == "base") {
      cfg->accel_base = value;
    } else if (key == "threads") {
      cfg->threads = std::stoi(value);
    } else if (key == "wall_clock") {
      cfg->wall_clock = value == "1" || value == "true";
    } else {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
}

void TraceCsv::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const TraceRow& a, const TraceRow& b) {
    if (a.run_id != b.run_id) return a.run_id < b.run_id;
    return a.iter < b.iter;
  });
}

std::string TraceCsv::to_string() const {
  std::string out;
  out.reserve(64 * rows.size() + 256);
  for (const auto& [k, v] : metadata) {
    out += "# ";
    out += k;
    out += "=";
    out += v;
    out += "\n";
  }
  out += kHeader;
  out += "\n";
  auto field = [&](double v) {
    if (!std::isnan(v)) out += format_double(v);
  };
  for (const auto& r : rows) {
    out += std::to_string(r.run_id);
    out += ",";
    out += std::to_string(r.iter);
    out += ",";
    field(r.objective);
    out += ",";
    field(r.opt_error);
    out += ",";
    field(r.stat_error);
    out += ",";
    field(r.theta);
    out += ",";
    field(r.rho);
    out += ",";
    field(r.r_t);
    out += ",";
    if (r.searches_used >= 0) out += std::to_string(r.searches_used);
    out += ",";
    if (r.wall_ns >= 0) out += std::to_string(r.wall_ns);
    out += "\n";
  }
  return out;
}

void TraceCsv::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << to_string();
}

void write_result(const ExperimentResult& result, const std::string& out_dir) {
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, table] : result.tables) {
    table.write(out_dir + "/" + name + ".csv");
  }
  std::ofstream summary(out_dir + "/summary.txt", std::ios::binary);
  if (!summary) throw Error("cannot write summary in " + out_dir);
  for (const auto& [k, v] : result.summary) summary << k << "=" << v << "\n";
}

MatrixXd gen_design(int n, int p, DesignKind design, Rng& rng, double r) {
  if (n <= 0 || p <= 0) throw ConfigError("gen_design: sizes must be positive");
  MatrixXd x(n, p);
  if (design == DesignKind::uniform01) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) x(i, j) = rng.uniform();
    }
    return x;
  }
  if (!(std::abs(r) < 1.0)) {
    throw ConfigError("gen_design: AR parameter must satisfy |r| < 1");
  }
  MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(r, std::abs(i - j));
  }
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("gen_design: AR covariance is not positive definite");
  }
  const MatrixXd l = llt.matrixL();
  MatrixXd z(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z(i, j) = rng.normal();
  }
  x.noalias() = z * l.transpose();
  return x;
}

MatrixXd gen_design(int n, int p, DesignKind design, std::uint64_t seed, double r) {
  Rng rng(seed);
  return gen_design(n, p, design, rng, r);
}

double fit_loglog_slope(const std::vector<double>& series, int t_lo, int t_hi,
                        int* dropped_count) {
  if (t_lo < 1 || t_hi < t_lo) throw DomainError("fit_loglog_slope: bad window");
  t_hi = std::min<int>(t_hi, static_cast<int>(series.size()));
  double sx = 0.0, sy = 0.0;
  int m = 0;
  int dropped = 0;
  for (int t = t_lo; t <= t_hi; ++t) {
    const double v = series[t - 1];
    if (!(v > 0.0)) {
      ++dropped;
      continue;
    }
    sx += std::log(static_cast<double>(t));
    sy += std::log(v);
    ++m;
  }
  if (dropped_count) *dropped_count = dropped;
  if (m < 3) throw InsufficientData("fit_loglog_slope: fewer than 3 usable points");
  const double mx = sx / m;
  const double my = sy / m;
  double sxx = 0.0, sxy = 0.0;
  for (int t = t_lo; t <= t_hi; ++t) {
    const double v = series[t - 1];
    if (!(v > 0.0)) continue;
    const double dx = std::log(static_cast<double>(t)) - mx;
    sxy += dx * (std::log(v) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<double> running_average(const std::vector<double>& terms) {
  std::vector<double> avg(terms.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    sum += terms[k];
    avg[k] = sum / static_cast<double>(k + 1);
  }
  return avg;
}

ExperimentResult run_is_mirror(const ExperimentConfig& cfg) {
  const int n = cfg.n > 0 ? cfg.n : (cfg.paper_scale ? 1000 : 200);
  const int p = cfg.p > 0 ? cfg.p : (cfg.paper_scale ? 1000 : 200);
  const int reps = cfg.replications > 0 ? cfg.replications : 50;
  const int iters = cfg.iters > 0 ? cfg.iters : 1000;

  const IsInstance inst = make_is_instance(n, p, cfg.seed, cfg.noise_sigma2);
  const SurrogateProblem prob = make_mirror_problem(LossSpec::itakura_saito(inst.x, inst.y));

  std::vector<RunSeries> runs(reps);
  parallel_for(reps, cfg.threads, [&](int idx) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(idx + 1));
    VectorXd beta0(p);
    for (int j = 0; j < p; ++j) beta0[j] = rng.uniform();
    RunConfig rc;
    rc.max_iter = iters;
    rc.tol = 1e-13;
    const IterateTrace trace = run(prob, beta0, rc);
    require_decrease_bound(trace, "is-mirror run " + std::to_string(idx + 1));
    runs[idx] = pad_trace(trace, iters);
  });

  ExperimentResult result;
  TraceCsv csv;
  add_meta(&csv, cfg, n, p, iters, reps);
  csv.metadata.emplace_back("opt_error_measure", "2*rho*sym_D_entropy - backward_Delta_f");
  csv.metadata.emplace_back("rho", "100");
  csv.metadata.emplace_back("y_floored", std::to_string(inst.floored));
  std::vector<double> slopes;
  int pass_count = 0;
  for (int r = 0; r < reps; ++r) {
    append_rows(&csv, runs[r], r + 1, true, false);
    const double slope = fit_loglog_slope(running_average(runs[r].opt_terms), 10, iters);
    slopes.push_back(slope);
    if (slope <= -0.9) ++pass_count;
  }
  csv.sort_rows();
  result.tables.emplace_back("is_mirror", std::move(csv));

  const double frac = static_cast<double>(pass_count) / reps;
  result.gates_passed = frac >= 0.95;
  result.summary.emplace_back("experiment", "is-mirror");
  result.summary.emplace_back("seed", std::to_string(cfg.seed));
  result.summary.emplace_back("n", std::to_string(n));
  result.summary.emplace_back("p", std::to_string(p));
  result.summary.emplace_back("starts", std::to_string(reps));
  result.summary.emplace_back("y_floored", std::to_string(inst.floored));
  result.summary.emplace_back("slope_median", format_double(quantile_sorted(slopes, 0.5)));
  result.summary.emplace_back("slope_max", format_double(*std::max_element(slopes.begin(), slopes.end())));
  result.summary.emplace_back("slope_pass_fraction", format_double(frac));
  result.summary.emplace_back("gate_slope", bool_word(result.gates_passed));
  return result;
}

ExperimentResult run_dc_svm(const ExperimentConfig& cfg) {
  const int n = cfg.n > 0 ? cfg.n : (cfg.paper_scale ? 400 : 100);
  const int p = cfg.p > 0 ? cfg.p : (cfg.paper_scale ? 800 : 150);
  const int reps = cfg.replications > 0 ? cfg.replications : 20;
  const int iters = cfg.iters > 0 ? cfg.iters : 60;
  const double lambda = 1.0;

  Rng data(cfg.seed);
  const MatrixXd x = gen_design(n, p, DesignKind::gaussian_ar, data, 0.5);
  VectorXd beta_star = VectorXd::Zero(p);
  if (!cfg.beta_star.empty()) {
    for (std::size_t j = 0; j < cfg.beta_star.size() && j < static_cast<std::size_t>(p); ++j) {
      beta_star[j] = cfg.beta_star[j];
    }
  } else {
    beta_star[0] = 15.0;
    beta_star[1] = 10.0;
  }
  const double sigma = std::sqrt(cfg.noise_sigma2);
  VectorXd y = x * beta_star;
  for (int i = 0; i < n; ++i) {
    y[i] += data.normal(0.0, sigma);
    y[i] = y[i] >= 0.0 ? 1.0 : -1.0;
  }
  const SurrogateProblem prob = make_dc_problem(x, y, lambda);

  std::vector<RunSeries> runs(reps);
  parallel_for(reps, cfg.threads, [&](int idx) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(idx + 1));
    VectorXd beta0(p);
    for (int j = 0; j < p; ++j) beta0[j] = rng.uniform();
    RunConfig rc;
    rc.max_iter = iters;
    rc.tol = 1e-12;
    const IterateTrace trace = run(prob, beta0, rc);
    require_decrease_bound(trace, "dc-svm run " + std::to_string(idx + 1));
    runs[idx] = pad_trace(trace, iters);
  });

  ExperimentResult result;
  TraceCsv csv;
  add_meta(&csv, cfg, n, p, iters, reps);
  csv.metadata.emplace_back("opt_error_measure", "Delta_l + backward_Delta_d2 + Delta_d1");
  csv.metadata.emplace_back("lambda", format_double(lambda));
  std::vector<double> slopes;
  int pass_count = 0;
  bool monotone = true;
  for (int r = 0; r < reps; ++r) {
    append_rows(&csv, runs[r], r + 1, true, false);
    const double slope = fit_loglog_slope(running_average(runs[r].opt_terms), 10, iters);
    slopes.push_back(slope);
    if (slope <= -0.9) ++pass_count;
    for (std::size_t k = 0; k + 1 < runs[r].objective.size(); ++k) {
      if (runs[r].objective[k + 1] > runs[r].objective[k] + 1e-8) monotone = false;
    }
  }
  csv.sort_rows();
  result.tables.emplace_back("dc_svm", std::move(csv));
  const double frac = static_cast<double>(pass_count) / reps;
  result.gates_passed = frac >= 0.95;
  result.summary.emplace_back("experiment", "dc-svm");
  result.summary.emplace_back("seed", std::to_string(cfg.seed));
  result.summary.emplace_back("n", std::to_string(n));
  result.summary.emplace_back("p", std::to_string(p));
  result.summary.emplace_back("starts", std::to_string(reps));
  result.summary.emplace_back("slope_median", format_double(quantile_sorted(slopes, 0.5)));
  result.summary.emplace_back("slope_max", format_double(*std::max_element(slopes.begin(), slopes.end())));
  result.summary.emplace_back("slope_pass_fraction", format_double(frac));
  result.summary.emplace_back("objective_nonincreasing", bool_word(monotone));
  result.summary.emplace_back("gate_slope", bool_word(result.gates_passed));
  return result;
}

namespace {

struct SparseRegOutcome {
  // [start][iter] sums over replications
  std::vector<std::vector<double>> obj_sum;
  std::vector<std::vector<double>> stat_sum;
  std::vector<double> final_sqerr;  // per (rep, start), appended in rep order
  int support_exact_hits = 0;       // nonzero set equals the true support
  int topk_hits = 0;                // top-J* magnitudes sit on the true support
  int topk_majority_reps = 0;       // replications where most starts select it
  int runs = 0;
  int reps = 0;
};

bool topk_selects_support(const VectorXd& beta, const std::vector<int>& support) {
  std::vector<int> top;
  VectorXd work = beta.cwiseAbs();
  for (std::size_t k = 0; k < support.size(); ++k) {
    int arg = 0;
    work.maxCoeff(&arg);
    top.push_back(arg);
    work[arg] = -1.0;
  }
  std::sort(top.begin(), top.end());
  return top == support;
}

}  // namespace

static ExperimentResult run_sparse_family(const ExperimentConfig& cfg, bool squared_loss_too) {
  const int n = cfg.n > 0 ? cfg.n : (cfg.paper_scale ? 800 : 200);
  const int p = cfg.p > 0 ? cfg.p : (cfg.paper_scale ? 1000 : 250);
  const int reps = cfg.replications > 0 ? cfg.replications : 20;
  const int iters = cfg.iters > 0 ? cfg.iters : 200;
  const double sigma = std::sqrt(cfg.noise_sigma2);
  const double lambda = cfg.lambda_a * sigma * std::sqrt(std::log(std::exp(1.0) * p));
  const int kStarts = 15;
  const double start_scale[kStarts] = {0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0,
                                       1.0, 1.0, 1.5, 1.5, 1.5, 1.5, 1.5};

  VectorXd beta_star = VectorXd::Zero(p);
  if (!cfg.beta_star.empty()) {
    for (std::size_t j = 0; j < cfg.beta_star.size() && j < static_cast<std::size_t>(p); ++j) {
      beta_star[j] = cfg.beta_star[j];
    }
  } else {
    beta_star[0] = 12.0;
    beta_star[1] = 8.0;
  }
  std::vector<int> true_support;
  for (int j = 0; j < p; ++j) {
    if (beta_star[j] != 0.0) true_support.push_back(j);
  }

  // AR(0.15) Cholesky factor, shared across replications.
  MatrixXd sigma_mat(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) sigma_mat(i, j) = std::pow(0.15, std::abs(i - j));
  }
  const MatrixXd chol_l = Eigen::LLT<MatrixXd>(sigma_mat).matrixL();

  std::vector<std::string> combos;
  if (squared_loss_too) combos = {"tisp_squared", "tisp_tukey", "lla_squared", "lla_tukey"};
  else combos = {"tisp_tukey", "lla_tukey"};

  std::map<std::string, SparseRegOutcome> outcomes;
  for (const auto& name : combos) {
    SparseRegOutcome o;
    o.obj_sum.assign(kStarts, std::vector<double>(iters + 1, 0.0));
    o.stat_sum.assign(kStarts, std::vector<double>(iters + 1, 0.0));
    outcomes[name] = o;
  }
  std::vector<std::map<std::string, SparseRegOutcome>> per_rep(reps);

  parallel_for(reps, cfg.threads, [&](int idx) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(idx + 1));
    MatrixXd z(n, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) z(i, j) = rng.normal();
    }
    MatrixXd x = z * chol_l.transpose();
    VectorXd y = x * beta_star;
    for (int i = 0; i < n; ++i) y[i] += rng.normal(0.0, sigma);
    std::vector<VectorXd> starts(kStarts, VectorXd(p));
    for (int s = 0; s < kStarts; ++s) {
      for (int j = 0; j < p; ++j) starts[s][j] = rng.uniform(-start_scale[s], start_scale[s]);
    }

    const double varrho = spectral_norm(x);
    // Pilot fit for the robust tuning constant: a few squared-loss
    // thresholding steps give residuals uncontaminated by the raw scale of y.
    const SurrogateProblem pilot_prob =
        make_tisp_problem(LossSpec::squared(x, y), ThresholdingRule::hard(), lambda, varrho);
    RunConfig pilot_rc;
    pilot_rc.max_iter = 10;
    pilot_rc.record_iterates = false;
    const VectorXd pilot_beta = run(pilot_prob, VectorXd::Zero(p), pilot_rc).final_beta;
    const LossSpec tukey_loss = LossSpec::tukey_from_pilot(x, y, pilot_beta);
    const LossSpec squared_loss = LossSpec::squared(x, y);

    auto run_combo = [&](const std::string& name, const SurrogateProblem& prob) {
      SparseRegOutcome out;
      out.obj_sum.assign(kStarts, std::vector<double>(iters + 1, 0.0));
      out.stat_sum.assign(kStarts, std::vector<double>(iters + 1, 0.0));
      for (int s = 0; s < kStarts; ++s) {
        RunConfig rc;
        rc.max_iter = iters;
        rc.tol = 1e-10;
        rc.beta_star = beta_star;
        const IterateTrace trace = run(prob, starts[s], rc);
        require_decrease_bound(trace, name + " rep " + std::to_string(idx + 1) + " start " +
                                          std::to_string(s + 1));
        const RunSeries series = pad_trace(trace, iters);
        for (int k = 0; k <= iters; ++k) {
          out.obj_sum[s][k] += series.objective[k];
          out.stat_sum[s][k] += series.stat_error[k];
        }
        out.final_sqerr.push_back((series.final_beta - beta_star).squaredNorm());
        std::vector<int> support;
        for (int j = 0; j < p; ++j) {
          if (series.final_beta[j] != 0.0) support.push_back(j);
        }
        if (support == true_support) ++out.support_hits;
        ++out.runs;
      }
      per_rep[idx][name] = std::move(out);
    };

    for (const auto& name : combos) {
      const bool tisp = name.rfind("tisp", 0) == 0;
      const LossSpec& loss = name.find("squared") != std::string::npos ? squared_loss : tukey_loss;
      if (tisp) {
        run_combo(name, make_tisp_problem(loss, ThresholdingRule::hard(), lambda, varrho));
      } else {
        run_combo(name, make_lla_problem(loss, ThresholdingRule::hard(), lambda, varrho));
      }
    }
  });

  // merge in replication order
  for (int r = 0; r < reps; ++r) {
    for (auto& [name, out] : per_rep[r]) {
      auto& agg = outcomes[name];
      for (int s = 0; s < kStarts; ++s) {
        for (int k = 0; k <= iters; ++k) {
          agg.obj_sum[s][k] += out.obj_sum[s][k];
          agg.stat_sum[s][k] += out.stat_sum[s][k];
        }
      }
      agg.final_sqerr.insert(agg.final_sqerr.end(), out.final_sqerr.begin(),
                             out.final_sqerr.end());
      agg.support_hits += out.support_hits;
      agg.runs += out.runs;
    }
  }

  ExperimentResult result;
  result.summary.emplace_back("experiment", experiment_name(cfg.experiment));
  result.summary.emplace_back("seed", std::to_string(cfg.seed));
  result.summary.emplace_back("n", std::to_string(n));
  result.summary.emplace_back("p", std::to_string(p));
  result.summary.emplace_back("replications", std::to_string(reps));
  result.summary.emplace_back("lambda", format_double(lambda));

  for (const auto& name : combos) {
    const auto& agg = outcomes.at(name);
    TraceCsv csv;
    add_meta(&csv, cfg, n, p, iters, reps);
    csv.metadata.emplace_back("combo", name);
    csv.metadata.emplace_back("stat_error_measure",
                              name.rfind("tisp", 0) == 0
                                  ? "varrho^2 D_2 - Delta_l (surrogate psi)"
                                  : "Delta_LLA (linearized penalty divergence)");
    csv.metadata.emplace_back("curves", "mean over replications");
    for (int s = 0; s < kStarts; ++s) {
      for (int k = 0; k <= iters; ++k) {
        TraceRow row;
        row.run_id = s + 1;
        row.iter = k;
        row.objective = agg.obj_sum[s][k] / reps;
        row.stat_error = agg.stat_sum[s][k] / reps;
        csv.rows.push_back(row);
      }
    }
    csv.sort_rows();
    result.tables.emplace_back(name, std::move(csv));

    double mean_err = 0.0, max_err = 0.0;
    for (double e : agg.final_sqerr) {
      mean_err += e;
      max_err = std::max(max_err, e);
    }
    mean_err /= agg.final_sqerr.size();
    const double support_frac = static_cast<double>(agg.support_hits) / agg.runs;
    const bool err_gate = mean_err <= 5.0;
    result.summary.emplace_back(name + "_final_sqerr_mean", format_double(mean_err));
    result.summary.emplace_back(name + "_final_sqerr_max", format_double(max_err));
    result.summary.emplace_back(name + "_support_fraction", format_double(support_frac));
    result.summary.emplace_back(name + "_gate_error", bool_word(err_gate));
    result.gates_passed = result.gates_passed && err_gate;
    if (name.find("squared") != std::string::npos) {
      const bool support_gate = support_frac >= 0.9;
      result.summary.emplace_back(name + "_gate_support", bool_word(support_gate));
      result.gates_passed = result.gates_passed && support_gate;
    }
  }
  return result;
}

ExperimentResult run_sparse_reg(const ExperimentConfig& cfg) {
  return run_sparse_family(cfg, true);
}

ExperimentResult run_robust_reg(const ExperimentConfig& cfg) {
  return run_sparse_family(cfg, false);
}

namespace {

int iterations_to_target(const std::vector<double>& objective, double target) {
  const double slack = 1e-9 * (1.0 + std::abs(target));
  for (std::size_t k = 0; k < objective.size(); ++k) {
    if (objective[k] <= target + slack) return static_cast<int>(k);
  }
  return -1;  // never reached
}

}  // namespace

ExperimentResult run_accel_compare(const ExperimentConfig& cfg) {
  ExperimentResult result;
  result.summary.emplace_back("experiment", "accel-compare");
  result.summary.emplace_back("base", cfg.accel_base);
  result.summary.emplace_back("seed", std::to_string(cfg.seed));

  if (cfg.accel_base == "is-mirror") {
    const int n = cfg.n > 0 ? cfg.n : (cfg.paper_scale ? 1000 : 200);
    const int p = cfg.p > 0 ? cfg.p : (cfg.paper_scale ? 1000 : 200);
    const int reps = cfg.replications > 0 ? cfg.replications : 50;
    const int iters = cfg.iters > 0 ? cfg.iters : 1000;
    const IsInstance inst = make_is_instance(n, p, cfg.seed, cfg.noise_sigma2);
    const SurrogateProblem prob = make_mirror_problem(LossSpec::itakura_saito(inst.x, inst.y));

    std::vector<RunSeries> plain(reps), accel(reps);
    std::vector<int> iters_to(reps);
    parallel_for(reps, cfg.threads, [&](int idx) {
      Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(idx + 1));
      VectorXd beta0(p);
      for (int j = 0; j < p; ++j) beta0[j] = rng.uniform();
      RunConfig rc;
      rc.max_iter = iters;
      rc.tol = 1e-13;
      const IterateTrace plain_trace = run(prob, beta0, rc);
      require_decrease_bound(plain_trace, "accel-compare plain run");
      plain[idx] = pad_trace(plain_trace, iters);

      AccelConfig acfg;
      acfg.scheme = AccelScheme::second_kind;
      acfg.max_iter = iters;
      acfg.tol = 1e-13;
      const IterateTrace accel_trace = AcceleratedSolver(prob, acfg).run(beta0);
      accel[idx] = pad_trace(accel_trace, iters);
      iters_to[idx] = iterations_to_target(accel[idx].objective, plain[idx].objective.back());
    });

    TraceCsv plain_csv, accel_csv;
    add_meta(&plain_csv, cfg, n, p, iters, reps);
    plain_csv.metadata.emplace_back("variant", "plain");
    add_meta(&accel_csv, cfg, n, p, iters, reps);
    accel_csv.metadata.emplace_back("variant", "accelerated_second_kind");
    int within_budget = 0;
    std::vector<double> iters_to_d;
    for (int r = 0; r < reps; ++r) {
      append_rows(&plain_csv, plain[r], r + 1, true, false);
      append_rows(&accel_csv, accel[r], r + 1, false, true);
      if (iters_to[r] >= 0 && iters_to[r] <= 100) ++within_budget;
      iters_to_d.push_back(iters_to[r] < 0 ? static_cast<double>(iters) : iters_to[r]);
    }
    plain_csv.sort_rows();
    accel_csv.sort_rows();
    result.tables.emplace_back("accel_compare_plain", std::move(plain_csv));
    result.tables.emplace_back("accel_compare_accel", std::move(accel_csv));
    const double frac = static_cast<double>(within_budget) / reps;
    result.gates_passed = frac >= 0.9;
    result.summary.emplace_back("iters_to_target_median",
                                format_double(quantile_sorted(iters_to_d, 0.5)));
    result.summary.emplace_back("iters_to_target_max",
                                format_double(*std::max_element(iters_to_d.begin(), iters_to_d.end())));
    result.summary.emplace_back("within_100_fraction", format_double(frac));
    result.summary.emplace_back("gate_accel", bool_word(result.gates_passed));
    return result;
  }

  if (cfg.accel_base != "robust-reg") {
    throw ConfigError("accel-compare: base must be is-mirror or robust-reg");
  }

  const int n = cfg.n > 0 ? cfg.n : 200;
  const int p = cfg.p > 0 ? cfg.p : 250;
  const int reps = cfg.replications > 0 ? cfg.replications : 20;
  const int iters = cfg.iters > 0 ? cfg.iters : 500;
  const double sigma = std::sqrt(cfg.noise_sigma2);
  const double lambda = cfg.lambda_a * sigma * std::sqrt(std::log(std::exp(1.0) * p));

  Rng data(cfg.seed);
  const MatrixXd x = gen_design(n, p, DesignKind::gaussian_ar, data, 0.15);
  VectorXd beta_star = VectorXd::Zero(p);
  beta_star[0] = 12.0;
  beta_star[1] = 8.0;
  VectorXd y = x * beta_star;
  for (int i = 0; i < n; ++i) y[i] += data.normal(0.0, sigma);

  const double varrho = spectral_norm(x);
  const SurrogateProblem pilot_prob =
      make_tisp_problem(LossSpec::squared(x, y), ThresholdingRule::hard(), lambda, varrho);
  RunConfig pilot_rc;
  pilot_rc.max_iter = 10;
  pilot_rc.record_iterates = false;
  const VectorXd pilot_beta = run(pilot_prob, VectorXd::Zero(p), pilot_rc).final_beta;
  const SurrogateProblem prob = make_tisp_problem(LossSpec::tukey_from_pilot(x, y, pilot_beta),
                                                  ThresholdingRule::hard(), lambda, varrho);

  std::vector<RunSeries> plain(reps), accel(reps);
  std::vector<int> plain_iters(reps), accel_iters(reps);
  parallel_for(reps, cfg.threads, [&](int idx) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(idx + 1));
    VectorXd beta0(p);
    for (int j = 0; j < p; ++j) beta0[j] = rng.uniform(-1.0, 1.0);
    RunConfig rc;
    rc.max_iter = iters;
    rc.tol = 1e-10;
    rc.beta_star = beta_star;
    const IterateTrace plain_trace = run(prob, beta0, rc);
    require_decrease_bound(plain_trace, "accel-compare plain tisp run");
    plain[idx] = pad_trace(plain_trace, iters);

    AccelConfig acfg;
    acfg.scheme = AccelScheme::first_kind;
    acfg.max_iter = iters;
    acfg.tol = 1e-10;
    acfg.beta_star = beta_star;
    const IterateTrace accel_trace = AcceleratedSolver(prob, acfg).run(beta0);
    accel[idx] = pad_trace(accel_trace, iters);

    const double target = plain[idx].objective.back();
    plain_iters[idx] = iterations_to_target(plain[idx].objective, target);
    const int a = iterations_to_target(accel[idx].objective, target);
    accel_iters[idx] = a < 0 ? iters : a;
  });

  TraceCsv plain_csv, accel_csv;
  add_meta(&plain_csv, cfg, n, p, iters, reps);
  plain_csv.metadata.emplace_back("variant", "plain_tisp_tukey");
  add_meta(&accel_csv, cfg, n, p, iters, reps);
  accel_csv.metadata.emplace_back("variant", "accelerated_first_kind");
  std::vector<double> ratio;
  for (int r = 0; r < reps; ++r) {
    append_rows(&plain_csv, plain[r], r + 1, true, false);
    append_rows(&accel_csv, accel[r], r + 1, false, true);
    ratio.push_back(static_cast<double>(accel_iters[r]) / std::max(1, plain_iters[r]));
  }
  plain_csv.sort_rows();
  accel_csv.sort_rows();
  result.tables.emplace_back("accel_compare_plain", std::move(plain_csv));
  result.tables.emplace_back("accel_compare_accel", std::move(accel_csv));
  const double med_ratio = quantile_sorted(ratio, 0.5);
  result.gates_passed = med_ratio <= 0.7;
  result.summary.emplace_back("iter_ratio_median", format_double(med_ratio));
  result.summary.emplace_back("gate_accel", bool_word(result.gates_passed));
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::is_mirror: return run_is_mirror(cfg);
    case ExperimentKind::dc_svm: return run_dc_svm(cfg);
    case ExperimentKind::sparse_reg: return run_sparse_reg(cfg);
    case ExperimentKind::robust_reg: return run_robust_reg(cfg);
    case ExperimentKind::accel_compare: return run_accel_compare(cfg);
    case ExperimentKind::invariants:
      throw ConfigError("run_experiment: invariants runs through the check subcommand");
  }
  throw ConfigError("run_experiment: unknown experiment");
}

}  // namespace bregman
