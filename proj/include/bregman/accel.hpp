#pragma once

#include <optional>
#include <vector>

#include "bregman/solvers.hpp"

namespace bregman {

enum class AccelScheme { first_kind, second_kind };
enum class AccelMirror { quadratic, entropy };

// Defaults match the momentum algorithms' stated header values
// (rho_min = 1, alpha = 2, M = 3, mu0 = 0, theta0 = 1).
struct AccelConfig {
  AccelScheme scheme = AccelScheme::second_kind;
  double rho_min = 1.0;
  double alpha = 2.0;  // trial growth factor, > 1
  int M = 3;           // search budget per iteration
  double mu0 = 0.0;
  double theta0 = 1.0;  // in (0, 1]
  AccelMirror phi = AccelMirror::quadratic;
  int max_iter = 1000;
  double tol = 1e-8;

  // Line search off: rho_t pinned at rho_fixed, theta from the recurrence
  // (or pinned at theta_fixed for the constant-theta strongly convex mode).
  bool line_search = true;
  double rho_fixed = 0.0;
  std::optional<double> theta_fixed;

  // psi_0 = loss - shift * ||.||^2/2. Defaults: varrho^2 L_Theta for the
  // tisp family, 0 otherwise. accelerated_quantile_tisp sets it to its
  // restricted-smoothness level.
  std::optional<double> psi0_shift;
  double rho_plus = 0.0;  // restricted isometry bound rho_+(2q); 0 = ||X||_2^2

  bool disable_momentum = false;  // debug: gamma = beta (and alpha = beta)
  bool validate_rt = false;       // debug: recompute R_t from scratch each step
  bool record_iterates = true;
  std::optional<VectorXd> beta_star;
};

struct AccelTrial {
  double rho = 0.0;
  double theta = 0.0;
  double r_t = 0.0;
  bool feasible = true;  // subproblem stayed inside the domain
};

struct AccelState {
  VectorXd alpha_iter;  // second kind
  VectorXd beta_iter;
  VectorXd beta_prev;  // first-kind momentum memory
  VectorXd gamma_iter;
  double theta_t = 1.0;
  double rho_t = 0.0;
  double theta_prev = 1.0;
  double rho_prev = 0.0;
  long t = 0;
  double last_Rt = 0.0;
  int searches_used = 0;
  double loss_beta = 0.0;  // cached l(beta_iter)
  double f_beta = 0.0;     // cached objective(beta_iter)
  std::vector<AccelTrial> last_trials;
};

// Solves theta^2/(1-theta) = theta_prev (rho_prev theta_prev + mu0) / rho_new:
// r = (rho_prev theta_prev + mu0) theta_prev / rho_new, theta = (sqrt(r^2+4r)-r)/2.
double theta_update(double theta_prev, double rho_prev, double rho_new, double mu0);

// Momentum engine over a surrogate problem. Supported families: gradient,
// mirror_entropy (second kind only), tisp with soft/hard rules, quantile.
class AcceleratedSolver {
 public:
  AcceleratedSolver(SurrogateProblem prob, AccelConfig cfg);

  AccelState init(const VectorXd& beta0) const;

  // One candidate step at the given (theta, rho); fills last_Rt. Throws
  // DomainError when the subproblem exits the domain (entropy map overflow).
  AccelState second_kind_step(const AccelState& s, double theta, double rho) const;
  AccelState first_kind_step(const AccelState& s, double theta, double rho) const;

  // One outer iteration: trial loop rho = rho_min alpha^{s-1}, s = 1..M+1,
  // accepting the first R_t >= 0 within budget, otherwise the candidate
  // maximizing R_t/(theta^2 rho) (ties toward the smallest rho).
  AccelState line_search_iterate(const AccelState& s) const;

  IterateTrace run(const VectorXd& beta0) const;

  const SurrogateProblem& problem() const { return prob_; }
  const AccelConfig& config() const { return cfg_; }
  double psi0_shift() const { return shift_; }

  // Independent re-evaluation of the line-search certificate for a completed
  // step (debug path backing validate_rt).
  double rt_from_scratch(const AccelState& before, const AccelState& after) const;

 private:
  double theta_for(const AccelState& s, double rho) const;
  double resolve_theta_rho(const AccelState& s, double rho, double* theta) const;
  // Divergence of the mirror map phi.
  double dphi(const VectorXd& a, const VectorXd& b) const;
  // Delta of psi-bar_0 = loss - shift ||.||^2/2 - mu0 phi.
  double delta_psi_bar(const VectorXd& a, const VectorXd& b, double l_a, double l_b,
                       const VectorXd& grad_b) const;
  double penalty_value(const VectorXd& beta) const;  // family penalty for f
  VectorXd argmin_center(const VectorXd& gamma, const VectorXd& grad_gamma, double coef_gamma,
                         double coef_anchor, const VectorXd& anchor) const;
  VectorXd apply_family_prox(const VectorXd& center, double quad_coef) const;

  SurrogateProblem prob_;
  AccelConfig cfg_;
  double shift_ = 0.0;
};

// Operation-level wrappers: evaluate one candidate step at state.rho_t.
AccelState second_kind_step(const SurrogateProblem& prob, const AccelState& state,
                            const AccelConfig& cfg);
AccelState first_kind_step(const SurrogateProblem& prob, const AccelState& state,
                           const AccelConfig& cfg);
AccelState line_search_iterate(const SurrogateProblem& prob, const AccelState& state,
                               const AccelConfig& cfg);

// Second-kind scheme specialized to l0-constrained least squares:
// phi = ||.||^2/2, mu0 = 0, psi_0 = l - L ||.||^2/2 with L = rho_plus(2q)/sqrt(r),
// and the universal stepsize rho_t = (1 - 1/sqrt(r)) rho_plus(2q).
// Requires r_ratio > 1.
IterateTrace accelerated_quantile_tisp(const SurrogateProblem& prob, const VectorXd& beta0, int q,
                                       double r_ratio, AccelConfig cfg);

}  // namespace bregman
