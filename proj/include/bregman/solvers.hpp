#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "bregman/errors.hpp"
#include "bregman/losses.hpp"
#include "bregman/thresholds.hpp"

namespace bregman {

// Surrogate family: which linearization/divergence pair defines
// g(beta; beta-) = f(beta) + Delta_psi(beta, beta-).
enum class SurrogateFamily {
  gradient,        // psi = rho D_2 - Delta_f, smooth loss
  mirror_entropy,  // psi = rho D_phi - Delta_f with the entropy map
  tisp,            // psi = varrho^2 D_2 - Delta_l, composite with P_Theta(varrho .)
  quantile,        // psi = varrho^2 D_2 - Delta_l, l0-constrained
  lla,             // penalty linearized in |beta|, weighted lasso subproblem
  dc,              // psi = d_2, capped-l1 hinge subproblem via LP
  sigmoidal,       // fixed-preconditioner quadratic majorant
};

struct PenaltySpec {
  ThresholdingRule rule;
  double lambda = 0.0;
  double varrho = 1.0;  // scaling; the penalty applies to varrho * beta
};

struct SurrogateProblem {
  SurrogateFamily family;
  LossSpec loss;
  std::optional<PenaltySpec> penalty;  // tisp, lla
  int q = 0;                           // quantile
  double varrho = 0.0;                 // quantile scaling
  double dc_lambda = 0.0;

  // f(beta): loss plus the family's penalty term.
  double objective(const VectorXd& beta) const;
};

// Factories. Those taking a penalty enforce varrho >= ||X||_2.
SurrogateProblem make_gradient_problem(LossSpec loss);
SurrogateProblem make_mirror_problem(LossSpec loss);
SurrogateProblem make_tisp_problem(LossSpec loss, ThresholdingRule rule, double lambda,
                                   double varrho);
SurrogateProblem make_quantile_problem(LossSpec loss, int q, double varrho);
SurrogateProblem make_lla_problem(LossSpec loss, ThresholdingRule rule, double lambda,
                                  double varrho);
SurrogateProblem make_dc_problem(MatrixXd x, VectorXd y, double lambda);
SurrogateProblem make_sigmoidal_problem(MatrixXd x, VectorXd y);

// Per-iteration record. opt_error at index t is the surrogate error term for
// the step t -> t+1 (the family's (2 sym-Delta_psi + Delta_f) specialization);
// the last record of a finished run has none. Accel columns are filled only
// by accelerated runs.
struct IterateRecord {
  int iter = 0;
  double objective = 0.0;
  double opt_error = std::numeric_limits<double>::quiet_NaN();
  double stat_error = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
  double theta = std::numeric_limits<double>::quiet_NaN();
  double r_t = std::numeric_limits<double>::quiet_NaN();
  int searches_used = -1;
};

struct IterateTrace {
  std::vector<IterateRecord> records;
  VectorXd final_beta;
  int iterations = 0;
  bool converged = false;
  double fixed_point_residual = std::numeric_limits<double>::quiet_NaN();

  // max over T of  avg_{t<=T} opt_error - [f(b0) - f(b^{T+1})]/(T+1); the
  // surrogate-decrease bound demands this stay <= 1e-9 on every run.
  double max_bound_violation() const;

  // Arithmetic mean of opt_error over t = 0..T. Throws IndexError unless
  // T + 1 < records.size().
  double opt_error_average(int T) const;
};

// Step-level failure; carries whatever was recorded before the abort.
struct SolverAbort : Error {
  SolverAbort(const std::string& msg, IterateTrace partial_trace)
      : Error(msg), partial(std::move(partial_trace)) {}
  IterateTrace partial;
};

struct RunConfig {
  int max_iter = 1000;
  double tol = 1e-8;             // on ||b+ - b|| / (1 + ||b||)
  double rho = 0.0;              // inverse stepsize; 0 = family default
  bool record_iterates = true;   // diagnostics double the per-iteration cost
  std::optional<VectorXd> beta_star;  // enables the stat_error column
  int lla_max_inner = 10000;
  double lla_inner_tol = 1e-10;
};

// Single surrogate steps.
VectorXd gradient_step(const SurrogateProblem& prob, const VectorXd& beta, double rho);
VectorXd mirror_step(const SurrogateProblem& prob, const VectorXd& beta, double rho);
VectorXd tisp_step(const SurrogateProblem& prob, const VectorXd& beta);
VectorXd quantile_tisp_step(const SurrogateProblem& prob, const VectorXd& beta);
VectorXd lla_step(const SurrogateProblem& prob, const VectorXd& beta,
                  double inner_tol = 1e-10, int max_inner = 10000);
VectorXd dc_step(const SurrogateProblem& prob, const VectorXd& beta);
// One KL-divergence multiplicative update of both factors (H first, then W
// against the updated H). Requires strictly positive entries.
std::pair<MatrixXd, MatrixXd> nmf_mur_step(const MatrixXd& w, const MatrixXd& h, const MatrixXd& x,
                                           double rho);
VectorXd sigmoidal_step(const SurrogateProblem& prob, const VectorXd& beta);

// LLA linearization weights in the varrho*beta scale:
// alpha_j = Theta^{-1}(varrho |beta_j|; lambda) - varrho |beta_j|.
VectorXd lla_weights(const SurrogateProblem& prob, const VectorXd& beta);

// Weighted lasso  min_b loss(b) + sum_j w_j |b_j|  by cyclic coordinate
// descent with an active-set schedule. Supports the squared and smooth
// robust/GLM kinds. Convergence is measured by the stationarity residual;
// failure to reach tol within max_sweeps throws InnerSolverError.
VectorXd weighted_lasso_cd(const LossSpec& loss, const VectorXd& weights, VectorXd beta0,
                           double tol, int max_sweeps, int* sweeps_used = nullptr);

// Iterate until the fixed-point residual ||b+ - b|| <= tol (1 + ||b||) or
// max_iter; records the family's surrogate-error terms when asked.
IterateTrace run(const SurrogateProblem& prob, VectorXd beta0, const RunConfig& config);

struct FixedPointReport {
  double residual = 0.0;
  bool is_fixed = false;
};
// One more surrogate step from beta_hat; residual = ||step - beta_hat||_2.
FixedPointReport fixed_point_check(const SurrogateProblem& prob, const VectorXd& beta_hat,
                                   double tol);

// avg over t = 0..T of the recorded surrogate-error terms (delegates to the
// trace; kept as a free function to mirror the module surface).
double opt_error_average(const IterateTrace& trace, int T);

// Statistical error measure Delta_meas(beta_star, beta) for the family:
// tisp/quantile use varrho^2 D_2 - Delta_l; lla uses its linearized-penalty
// divergence; other families fall back to D_2.
double stat_error_measure(const SurrogateProblem& prob, const VectorXd& beta_star,
                          const VectorXd& beta);

}  // namespace bregman
