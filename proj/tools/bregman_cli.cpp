#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "bregman/checks.hpp"
#include "bregman/experiments.hpp"
#include "bregman/util.hpp"

namespace {

using bregman::ExperimentConfig;

struct SlopeArgs {
  std::string csv_path;
  std::string window = "10:200";
  std::string column = "opt_error";
  int run_id = 0;  // 0 = all runs
  bool raw = false;
};

int run_slope(const SlopeArgs& args) {
  std::ifstream in(args.csv_path);
  if (!in) {
    std::cerr << "cannot open " << args.csv_path << "\n";
    return 1;
  }
  const auto colon = args.window.find(':');
  if (colon == std::string::npos) {
    std::cerr << "window must be given as lo:hi\n";
    return 1;
  }
  const int t_lo = std::stoi(args.window.substr(0, colon));
  const int t_hi = std::stoi(args.window.substr(colon + 1));

  int col_index = -1;
  std::map<int, std::vector<double>> per_run;  // keyed by run_id, ordered by iter
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (col_index < 0) {
      std::stringstream header(line);
      std::string name;
      for (int idx = 0; std::getline(header, name, ','); ++idx) {
        if (name == args.column) col_index = idx;
      }
      if (col_index < 0) {
        std::cerr << "column '" << args.column << "' not in header\n";
        return 1;
      }
      continue;
    }
    std::stringstream row(line);
    std::string field;
    int idx = 0;
    int run = 0;
    double value = std::numeric_limits<double>::quiet_NaN();
    while (std::getline(row, field, ',')) {
      if (idx == 0) run = std::stoi(field);
      if (idx == col_index && !field.empty()) value = std::stod(field);
      ++idx;
    }
    if (args.run_id != 0 && run != args.run_id) continue;
    if (!std::isnan(value)) per_run[run].push_back(value);
  }

  for (auto& [run, series] : per_run) {
    const std::vector<double> fitted =
        args.raw ? series : bregman::running_average(series);
    try {
      int dropped = 0;
      const double slope = bregman::fit_loglog_slope(fitted, t_lo, t_hi, &dropped);
      std::cout << "run_id=" << run << " slope=" << bregman::format_double(slope);
      if (dropped > 0) std::cout << " dropped=" << dropped;
      std::cout << "\n";
    } catch (const bregman::InsufficientData&) {
      std::cout << "run_id=" << run << " slope=NA (insufficient data)\n";
    }
  }
  return 0;
}

int run_check(bool quick) {
  const auto results = bregman::check_invariants(quick);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << "  (" << r.detail << ")\n";
    all = all && r.pass;
  }
  std::cout << (all ? "all invariants hold\n" : "invariant failures detected\n");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bregman-surrogate optimization toolkit"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "run an experiment and export trace CSVs");
  std::string experiment;
  std::string config_path;
  ExperimentConfig cfg;
  int n = 0, p = 0, reps = 0, iters = 0, threads = 0;
  std::uint64_t seed = 42;
  std::string out_dir, base = "is-mirror";
  bool paper_scale = false, wall_clock = false;
  run_cmd->add_option("experiment", experiment,
                      "is-mirror | dc-svm | sparse-reg | robust-reg | accel-compare")
      ->required();
  run_cmd->add_option("--config", config_path, "key=value config file (flags override)");
  auto* opt_n = run_cmd->add_option("--n", n, "rows");
  auto* opt_p = run_cmd->add_option("--p", p, "columns");
  auto* opt_seed = run_cmd->add_option("--seed", seed, "base RNG seed");
  auto* opt_reps = run_cmd->add_option("--replications", reps, "starts / data replications");
  auto* opt_iters = run_cmd->add_option("--iters", iters, "iteration budget");
  auto* opt_out = run_cmd->add_option("--out", out_dir, "output directory");
  auto* opt_paper = run_cmd->add_flag("--paper-scale", paper_scale, "use the full-scale sizes");
  auto* opt_base = run_cmd->add_option("--base", base, "accel-compare base experiment");
  auto* opt_threads = run_cmd->add_option("--threads", threads, "worker threads (0 = hardware)");
  auto* opt_wall = run_cmd->add_flag("--wall-clock", wall_clock,
                                     "fill wall_ns (breaks byte determinism)");

  // check
  auto* check_cmd = app.add_subcommand("check", "run the invariant battery");
  std::string what = "invariants";
  bool quick = false;
  check_cmd->add_option("what", what, "only 'invariants' is defined");
  check_cmd->add_flag("--quick", quick, "reduced instance counts");

  // slope
  auto* slope_cmd = app.add_subcommand("slope", "fit a log-log slope from a trace CSV");
  SlopeArgs slope_args;
  slope_cmd->add_option("csv", slope_args.csv_path, "trace CSV path")->required();
  slope_cmd->add_option("--window", slope_args.window, "iteration window lo:hi (default 10:200)");
  slope_cmd->add_option("--column", slope_args.column, "column to fit (default opt_error)");
  slope_cmd->add_option("--run-id", slope_args.run_id, "restrict to one run (default all)");
  slope_cmd->add_flag("--raw", slope_args.raw, "fit the raw series, not its running average");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      cfg.experiment = bregman::parse_experiment(experiment);
      if (!config_path.empty()) bregman::apply_config_file(&cfg, config_path);
      cfg.experiment = bregman::parse_experiment(experiment);  // positional wins
      if (opt_n->count()) cfg.n = n;
      if (opt_p->count()) cfg.p = p;
      if (opt_seed->count()) cfg.seed = seed;
      if (opt_reps->count()) cfg.replications = reps;
      if (opt_iters->count()) cfg.iters = iters;
      if (opt_out->count()) cfg.out_dir = out_dir;
      if (opt_paper->count()) cfg.paper_scale = paper_scale;
      if (opt_base->count()) cfg.accel_base = base;
      if (opt_threads->count()) cfg.threads = threads;
      if (opt_wall->count()) cfg.wall_clock = wall_clock;

      const bregman::ExperimentResult result = bregman::run_experiment(cfg);
      bregman::write_result(result, cfg.out_dir);
      for (const auto& [k, v] : result.summary) std::cout << k << "=" << v << "\n";
      if (!cfg.out_dir.empty()) {
        std::cout << "wrote " << result.tables.size() << " csv file(s) to " << cfg.out_dir << "\n";
      }
      return result.gates_passed ? 0 : 1;
    }
    if (check_cmd->parsed()) {
      if (what != "invariants") {
        std::cerr << "unknown check target: " << what << "\n";
        return 1;
      }
      return run_check(quick);
    }
    if (slope_cmd->parsed()) return run_slope(slope_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
