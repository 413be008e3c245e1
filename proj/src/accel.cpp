#include "bregman/accel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bregman/util.hpp"

namespace bregman {

namespace {

double sgn(double t) { return (t > 0.0) - (t < 0.0); }

double soft(double z, double thresh) {
  const double a = std::abs(z);
  return a > thresh ? sgn(z) * (a - thresh) : 0.0;
}

// Scalar prox of the hard penalty with a general quadratic weight:
// argmin_v P_H(v; lambda) + kappa (v - z)^2 / 2. Piecewise quadratic, solved
// by candidate enumeration; reduces to hard thresholding at kappa = 1.
double prox_hard_penalty(double z, double lambda, double kappa) {
  const double az = std::abs(z);
  const double s = z >= 0.0 ? 1.0 : -1.0;
  auto objective = [&](double v) {
    const double pen = v >= lambda ? 0.5 * lambda * lambda : -0.5 * v * v + lambda * v;
    const double d = v - az;
    return pen + 0.5 * kappa * d * d;
  };
  double best_v = 0.0;
  double best_val = objective(0.0);
  auto consider = [&](double v) {
    const double val = objective(v);
    if (val < best_val) {
      best_val = val;
      best_v = v;
    }
  };
  consider(lambda);
  consider(std::max(az, lambda));  // saturated branch
  if (kappa != 1.0) {
    const double vstar = (kappa * az - lambda) / (kappa - 1.0);
    if (kappa > 1.0 && vstar > 0.0 && vstar < lambda) consider(vstar);
  }
  return s * best_v;
}

}  // namespace

double theta_update(double theta_prev, double rho_prev, double rho_new, double mu0) {
  const double r = (rho_prev * theta_prev + mu0) * theta_prev / rho_new;
  return 0.5 * (std::sqrt(r * r + 4.0 * r) - r);
}

AcceleratedSolver::AcceleratedSolver(SurrogateProblem prob, AccelConfig cfg)
    : prob_(std::move(prob)), cfg_(std::move(cfg)) {
  switch (prob_.family) {
    case SurrogateFamily::gradient:
      break;
    case SurrogateFamily::mirror_entropy:
      if (cfg_.scheme == AccelScheme::first_kind) {
        throw Unsupported("acceleration of the first kind uses the Euclidean map; "
                          "mirror problems take the second kind");
      }
      cfg_.phi = AccelMirror::entropy;
      break;
    case SurrogateFamily::tisp: {
      const auto kind = prob_.penalty->rule.kind();
      if (kind != ThresholdingRule::Kind::soft && kind != ThresholdingRule::Kind::hard) {
        throw Unsupported("accelerated tisp supports the soft and hard rules");
      }
      if (cfg_.phi != AccelMirror::quadratic) {
        throw Unsupported("accelerated tisp requires the quadratic map");
      }
      shift_ = prob_.penalty->varrho * prob_.penalty->varrho * prob_.penalty->rule.concavity();
      break;
    }
    case SurrogateFamily::quantile:
      if (cfg_.phi != AccelMirror::quadratic) {
        throw Unsupported("accelerated quantile thresholding requires the quadratic map");
      }
      break;
    default:
      throw Unsupported("acceleration is unavailable for this surrogate family");
  }
  if (cfg_.psi0_shift) shift_ = *cfg_.psi0_shift;
  if (cfg_.phi == AccelMirror::entropy && shift_ != 0.0) {
    throw Unsupported("entropy-map acceleration does not take a psi_0 shift");
  }
  if (!(cfg_.theta0 > 0.0 && cfg_.theta0 <= 1.0)) {
    throw ConfigError("AccelConfig: theta0 must lie in (0, 1]");
  }
  if (!(cfg_.alpha > 1.0)) throw ConfigError("AccelConfig: alpha must exceed 1");
  if (cfg_.M < 1) throw ConfigError("AccelConfig: M must be >= 1");
  if (!cfg_.line_search && !(cfg_.rho_fixed > 0.0)) {
    throw ConfigError("AccelConfig: rho_fixed must be positive when the search is off");
  }
}

double AcceleratedSolver::penalty_value(const VectorXd& beta) const {
  if (prob_.family == SurrogateFamily::tisp) {
    const PenaltySpec& pen = *prob_.penalty;
    double s = 0.0;
    for (int j = 0; j < beta.size(); ++j) {
      s += induced_penalty(pen.rule, pen.varrho * beta[j], pen.lambda);
    }
    return s;
  }
  // quantile keeps f = l: iterate mixtures may leave the l0 set
  return 0.0;
}

double AcceleratedSolver::dphi(const VectorXd& a, const VectorXd& b) const {
  if (cfg_.phi == AccelMirror::quadratic) return 0.5 * (a - b).squaredNorm();
  double s = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    s += a[j] * std::log(a[j] / b[j]) - a[j] + b[j];
  }
  return s;
}

double AcceleratedSolver::delta_psi_bar(const VectorXd& a, const VectorXd& b, double l_a,
                                        double l_b, const VectorXd& grad_b) const {
  const double delta_l = l_a - l_b - grad_b.dot(a - b);
  if (cfg_.phi == AccelMirror::quadratic) {
    return delta_l - (shift_ + cfg_.mu0) * 0.5 * (a - b).squaredNorm();
  }
  return delta_l - cfg_.mu0 * dphi(a, b);
}

VectorXd AcceleratedSolver::argmin_center(const VectorXd& gamma, const VectorXd& grad_gamma,
                                          double coef_gamma, double coef_anchor,
                                          const VectorXd& anchor) const {
  // Minimizer of <grad, .> + coef_gamma D2(., gamma) + coef_anchor D2(., anchor).
  if (coef_gamma == 0.0) return anchor - grad_gamma / coef_anchor;
  const double c = coef_gamma + coef_anchor;
  return (coef_gamma * gamma + coef_anchor * anchor - grad_gamma) / c;
}

VectorXd AcceleratedSolver::apply_family_prox(const VectorXd& center, double quad_coef) const {
  switch (prob_.family) {
    case SurrogateFamily::gradient:
    case SurrogateFamily::mirror_entropy:
      return center;
    case SurrogateFamily::quantile:
      return quantile_threshold(center, prob_.q);
    case SurrogateFamily::tisp: {
      const PenaltySpec& pen = *prob_.penalty;
      const double vr = pen.varrho;
      VectorXd out(center.size());
      if (pen.rule.kind() == ThresholdingRule::Kind::soft) {
        for (int j = 0; j < center.size(); ++j) {
          out[j] = soft(center[j], pen.lambda * vr / quad_coef);
        }
      } else {
        const double kappa = quad_coef / (vr * vr);
        for (int j = 0; j < center.size(); ++j) {
          out[j] = prox_hard_penalty(vr * center[j], pen.lambda, kappa) / vr;
        }
      }
      return out;
    }
    default:
      throw Unsupported("apply_family_prox: unsupported family");
  }
}

AccelState AcceleratedSolver::init(const VectorXd& beta0) const {
  AccelState s;
  s.alpha_iter = beta0;
  s.beta_iter = beta0;
  s.beta_prev = beta0;
  s.gamma_iter = beta0;
  s.theta_t = cfg_.theta_fixed.value_or(cfg_.theta0);
  s.rho_t = 0.0;
  s.theta_prev = s.theta_t;
  s.rho_prev = 0.0;
  s.t = 0;
  s.loss_beta = prob_.loss.value(beta0);
  s.f_beta = s.loss_beta + penalty_value(beta0);
  return s;
}

double AcceleratedSolver::theta_for(const AccelState& s, double rho) const {
  if (cfg_.theta_fixed) return *cfg_.theta_fixed;
  if (s.t == 0) return cfg_.theta0;
  return theta_update(s.theta_prev, s.rho_prev, rho, cfg_.mu0);
}

AccelState AcceleratedSolver::second_kind_step(const AccelState& s, double theta,
                                               double rho) const {
  AccelState next = s;
  next.theta_t = theta;
  next.rho_t = rho;

  const VectorXd& beta = s.beta_iter;
  const VectorXd alpha = cfg_.disable_momentum ? beta : s.alpha_iter;
  VectorXd gamma;
  if (cfg_.disable_momentum || theta == 1.0) {
    gamma = alpha;
  } else {
    gamma = (1.0 - theta) * beta + theta * alpha;
  }
  const VectorXd grad_gamma = prob_.loss.grad(gamma);
  const double l_gamma = prob_.loss.value(gamma);

  VectorXd alpha_next;
  const double tr = theta * rho;
  if (cfg_.phi == AccelMirror::entropy) {
    const double denom = cfg_.mu0 + tr;
    alpha_next.resize(alpha.size());
    for (int j = 0; j < alpha.size(); ++j) {
      const double lg = cfg_.mu0 == 0.0
                            ? std::log(alpha[j]) - grad_gamma[j] / denom
                            : (cfg_.mu0 * std::log(gamma[j]) + tr * std::log(alpha[j]) -
                               grad_gamma[j]) /
                                  denom;
      alpha_next[j] = cfg_.mu0 == 0.0 ? alpha[j] * std::exp(-grad_gamma[j] / denom)
                                      : std::exp(lg);
      if (!(alpha_next[j] > 0.0) || !std::isfinite(alpha_next[j])) {
        throw DomainError("second_kind_step: entropy update left the positive orthant");
      }
    }
  } else {
    const double quad_coef = shift_ + cfg_.mu0 + tr;
    const VectorXd center = argmin_center(gamma, grad_gamma, shift_ + cfg_.mu0, tr, alpha);
    alpha_next = apply_family_prox(center, quad_coef);
  }

  VectorXd beta_next =
      theta == 1.0 ? alpha_next : VectorXd((1.0 - theta) * beta + theta * alpha_next);

  // Certificate R_t = theta^2 rho Dphi(a+, a) - Delta(b+, g) + (1-theta) Delta(b, g) + C_h
  // with h = f - Delta_psibar(., g) and C_h = theta h(a+) + (1-theta) h(b) - h(b+).
  const double l_alpha_next = prob_.loss.value(alpha_next);
  const double l_beta_next = theta == 1.0 ? l_alpha_next : prob_.loss.value(beta_next);
  const double f_alpha_next = l_alpha_next + penalty_value(alpha_next);
  const double f_beta_next = theta == 1.0 ? f_alpha_next : l_beta_next + penalty_value(beta_next);

  const double d_bnext_g = delta_psi_bar(beta_next, gamma, l_beta_next, l_gamma, grad_gamma);
  const double d_b_g = delta_psi_bar(beta, gamma, s.loss_beta, l_gamma, grad_gamma);
  const double d_anext_g = delta_psi_bar(alpha_next, gamma, l_alpha_next, l_gamma, grad_gamma);
  const double h_anext = f_alpha_next - d_anext_g;
  const double h_b = s.f_beta - d_b_g;
  const double h_bnext = f_beta_next - d_bnext_g;
  const double comb = theta * h_anext + (1.0 - theta) * h_b - h_bnext;
  const double rt =
      theta * theta * rho * dphi(alpha_next, alpha) - d_bnext_g + (1.0 - theta) * d_b_g + comb;

  next.gamma_iter = std::move(gamma);
  next.alpha_iter = std::move(alpha_next);
  next.beta_prev = beta;
  next.beta_iter = std::move(beta_next);
  next.loss_beta = l_beta_next;
  next.f_beta = f_beta_next;
  next.last_Rt = rt;
  return next;
}

AccelState AcceleratedSolver::first_kind_step(const AccelState& s, double theta,
                                              double rho) const {
  AccelState next = s;
  next.theta_t = theta;
  next.rho_t = rho;

  const VectorXd& beta = s.beta_iter;
  VectorXd gamma;
  if (cfg_.disable_momentum || s.t == 0) {
    gamma = beta;
  } else {
    const double weight =
        s.rho_prev * theta * (1.0 - s.theta_prev) / (s.rho_prev * s.theta_prev + cfg_.mu0);
    gamma = beta + weight * (beta - s.beta_prev);
  }
  const VectorXd grad_gamma = prob_.loss.grad(gamma);
  const double l_gamma = prob_.loss.value(gamma);

  const double quad_coef = shift_ + cfg_.mu0 + rho;
  const VectorXd center = argmin_center(gamma, grad_gamma, shift_ + cfg_.mu0, rho, gamma);
  const VectorXd beta_next = apply_family_prox(center, quad_coef);

  const double l_beta_next = prob_.loss.value(beta_next);
  const double d_bnext_g = delta_psi_bar(beta_next, gamma, l_beta_next, l_gamma, grad_gamma);
  const double d_b_g = delta_psi_bar(beta, gamma, s.loss_beta, l_gamma, grad_gamma);
  const double rt =
      rho * 0.5 * (beta_next - gamma).squaredNorm() - d_bnext_g + (1.0 - theta) * d_b_g;

  next.gamma_iter = std::move(gamma);
  next.beta_prev = beta;
  next.beta_iter = beta_next;
  next.loss_beta = l_beta_next;
  next.f_beta = l_beta_next + penalty_value(beta_next);
  next.last_Rt = rt;
  return next;
}

AccelState AcceleratedSolver::line_search_iterate(const AccelState& s) const {
  auto candidate_step = [&](double theta, double rho) {
    return cfg_.scheme == AccelScheme::second_kind ? second_kind_step(s, theta, rho)
                                                   : first_kind_step(s, theta, rho);
  };

  auto finalize = [&](AccelState st, int searches, std::vector<AccelTrial> trials) {
    st.theta_prev = st.theta_t;
    st.rho_prev = st.rho_t;
    st.searches_used = searches;
    st.last_trials = std::move(trials);
    st.t = s.t + 1;
    if (cfg_.validate_rt) {
      const double fresh = rt_from_scratch(s, st);
      if (!(std::abs(fresh - st.last_Rt) <= 1e-9 * (1.0 + std::abs(fresh)))) {
        throw Error("line_search_iterate: cached R_t disagrees with the fresh evaluation");
      }
    }
    return st;
  };

  if (!cfg_.line_search) {
    const double rho = cfg_.rho_fixed;
    const double theta = theta_for(s, rho);
    AccelState st = candidate_step(theta, rho);
    return finalize(std::move(st), 1, {AccelTrial{rho, theta, 0.0, true}});
  }

  std::vector<AccelTrial> trials;
  std::optional<AccelState> best;
  double best_ratio = -std::numeric_limits<double>::infinity();
  double rho = cfg_.rho_min / cfg_.alpha;
  for (int trial = 1; trial <= cfg_.M + 1; ++trial) {
    rho *= cfg_.alpha;
    const double theta = theta_for(s, rho);
    AccelTrial record{rho, theta, -std::numeric_limits<double>::infinity(), true};
    std::optional<AccelState> cand;
    try {
      cand = candidate_step(theta, rho);
      record.r_t = cand->last_Rt;
      if (!std::isfinite(record.r_t)) {
        record.feasible = false;
        cand.reset();
      }
    } catch (const DomainError&) {
      record.feasible = false;  // entropy overflow at an aggressive step
    }
    trials.push_back(record);
    if (cand && record.r_t >= 0.0 && trial <= cfg_.M) {
      return finalize(std::move(*cand), trial, std::move(trials));
    }
    if (cand) {
      const double ratio = record.r_t / (theta * theta * rho);
      if (ratio > best_ratio) {  // ties keep the earlier (smaller rho) candidate
        best_ratio = ratio;
        best = std::move(cand);
      }
    }
  }
  if (!best) {
    throw SolverAbort("line_search_iterate: every trial left the domain", IterateTrace{});
  }
  return finalize(std::move(*best), cfg_.M + 1, std::move(trials));
}

double AcceleratedSolver::rt_from_scratch(const AccelState& before, const AccelState& after) const {
  const VectorXd& gamma = after.gamma_iter;
  const VectorXd grad_gamma = prob_.loss.grad(gamma);
  const double l_gamma = prob_.loss.value(gamma);
  auto dpsibar = [&](const VectorXd& a) {
    return delta_psi_bar(a, gamma, prob_.loss.value(a), l_gamma, grad_gamma);
  };
  const double theta = after.theta_t;
  if (cfg_.scheme == AccelScheme::first_kind) {
    return after.rho_t * 0.5 * (after.beta_iter - gamma).squaredNorm() - dpsibar(after.beta_iter) +
           (1.0 - theta) * dpsibar(before.beta_iter);
  }
  auto h = [&](const VectorXd& v) {
    return prob_.loss.value(v) + penalty_value(v) - dpsibar(v);
  };
  const VectorXd alpha_old = cfg_.disable_momentum ? before.beta_iter : before.alpha_iter;
  const double comb = theta * h(after.alpha_iter) + (1.0 - theta) * h(before.beta_iter) -
                      h(after.beta_iter);
  return theta * theta * after.rho_t * dphi(after.alpha_iter, alpha_old) -
         dpsibar(after.beta_iter) + (1.0 - theta) * dpsibar(before.beta_iter) + comb;
}

IterateTrace AcceleratedSolver::run(const VectorXd& beta0) const {
  IterateTrace trace;
  AccelState state = init(beta0);

  auto push_record = [&](const AccelState& st, bool with_step_info) {
    if (!cfg_.record_iterates) return;
    IterateRecord r;
    r.iter = static_cast<int>(st.t);
    r.objective = st.f_beta;
    if (with_step_info) {
      r.rho = st.rho_t;
      r.theta = st.theta_t;
      r.r_t = st.last_Rt;
      r.searches_used = st.searches_used;
    }
    if (cfg_.beta_star) {
      r.stat_error = stat_error_measure(prob_, *cfg_.beta_star, st.beta_iter);
    }
    trace.records.push_back(std::move(r));
  };

  push_record(state, false);
  for (int t = 0; t < cfg_.max_iter; ++t) {
    AccelState next;
    try {
      next = line_search_iterate(state);
    } catch (SolverAbort& abort) {
      trace.final_beta = state.beta_iter;
      trace.iterations = static_cast<int>(state.t);
      abort.partial = std::move(trace);
      throw;
    }
    const double residual =
        cfg_.scheme == AccelScheme::first_kind
            ? (next.beta_iter - next.gamma_iter).norm()
            : std::max((next.beta_iter - state.beta_iter).norm(),
                       (next.alpha_iter - state.alpha_iter).norm());
    state = std::move(next);
    push_record(state, true);
    trace.fixed_point_residual = residual;
    if (residual <= cfg_.tol * (1.0 + state.beta_iter.norm())) {
      trace.converged = true;
      break;
    }
  }
  trace.final_beta = state.beta_iter;
  trace.iterations = static_cast<int>(state.t);
  return trace;
}

AccelState second_kind_step(const SurrogateProblem& prob, const AccelState& state,
                            const AccelConfig& cfg) {
  AcceleratedSolver solver(prob, cfg);
  const double rho = state.rho_t > 0.0 ? state.rho_t : (cfg.line_search ? cfg.rho_min : cfg.rho_fixed);
  double theta = cfg.theta_fixed.value_or(state.t == 0 ? cfg.theta0 : theta_update(
                                              state.theta_prev, state.rho_prev, rho, cfg.mu0));
  return solver.second_kind_step(state, theta, rho);
}

AccelState first_kind_step(const SurrogateProblem& prob, const AccelState& state,
                           const AccelConfig& cfg) {
  AcceleratedSolver solver(prob, cfg);
  const double rho = state.rho_t > 0.0 ? state.rho_t : (cfg.line_search ? cfg.rho_min : cfg.rho_fixed);
  double theta = cfg.theta_fixed.value_or(state.t == 0 ? cfg.theta0 : theta_update(
                                              state.theta_prev, state.rho_prev, rho, cfg.mu0));
  return solver.first_kind_step(state, theta, rho);
}

AccelState line_search_iterate(const SurrogateProblem& prob, const AccelState& state,
                               const AccelConfig& cfg) {
  return AcceleratedSolver(prob, cfg).line_search_iterate(state);
}

IterateTrace accelerated_quantile_tisp(const SurrogateProblem& prob, const VectorXd& beta0, int q,
                                       double r_ratio, AccelConfig cfg) {
  if (prob.family != SurrogateFamily::quantile) {
    throw ConfigError("accelerated_quantile_tisp: problem must use the quantile family");
  }
  if (!(r_ratio > 1.0)) {
    throw ConfigError("accelerated_quantile_tisp: the ratio q/||beta*||_0 must exceed 1");
  }
  SurrogateProblem qprob = prob;
  qprob.q = q;
  double rho_plus = cfg.rho_plus;
  if (!(rho_plus > 0.0)) {
    const double nx = spectral_norm(prob.loss.x());
    rho_plus = nx * nx;  // rho_+(s) <= ||X||_2^2 for every s
  }
  const double sqrt_r = std::sqrt(r_ratio);
  cfg.scheme = AccelScheme::second_kind;
  cfg.phi = AccelMirror::quadratic;
  cfg.mu0 = 0.0;
  cfg.psi0_shift = rho_plus / sqrt_r;
  cfg.line_search = false;
  cfg.rho_fixed = (1.0 - 1.0 / sqrt_r) * rho_plus;
  cfg.theta_fixed.reset();
  AcceleratedSolver solver(std::move(qprob), std::move(cfg));
  return solver.run(beta0);
}

}  // namespace bregman
