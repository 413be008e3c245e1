#include "bregman/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bregman/lp.hpp"
#include "bregman/util.hpp"

namespace bregman {

namespace {

double sgn(double t) { return (t > 0.0) - (t < 0.0); }

double soft(double z, double thresh) {
  const double a = std::abs(z);
  return a > thresh ? sgn(z) * (a - thresh) : 0.0;
}

double d2(const VectorXd& a, const VectorXd& b) { return 0.5 * (a - b).squaredNorm(); }

// --- induced penalty P = P_Theta(.; lambda) helpers, argument already in the
// --- varrho*beta scale.

double pen_value(const PenaltySpec& pen, double t) {
  return induced_penalty(pen.rule, t, pen.lambda);
}

// P'(t) = Theta^{-1}(t) - t for t > 0; right derivative lambda at 0.
double pen_right_deriv(const PenaltySpec& pen, double t) {
  if (t == 0.0) return pen.lambda;
  return pen.rule.inverse(t, pen.lambda) - t;
}

// One-sided derivative of sum_j P(v_j) with increment h.
double pen_ddir(const PenaltySpec& pen, const VectorXd& v, const VectorXd& h) {
  double s = 0.0;
  for (int j = 0; j < v.size(); ++j) {
    if (v[j] != 0.0)
      s += sgn(v[j]) * pen_right_deriv(pen, std::abs(v[j])) * h[j];
    else
      s += pen.lambda * std::abs(h[j]);
  }
  return s;
}

double pen_total(const PenaltySpec& pen, const VectorXd& beta) {
  double s = 0.0;
  for (int j = 0; j < beta.size(); ++j) s += pen_value(pen, pen.varrho * beta[j]);
  return s;
}

// Scalar Delta_{|.|}(u, v).
double delta_abs(double u, double v) {
  if (v == 0.0) return 0.0;
  return std::abs(u) - sgn(v) * u;
}

// Scalar Delta_P(u, v) for the induced penalty.
double delta_pen(const PenaltySpec& pen, double u, double v) {
  if (v == 0.0) return pen_value(pen, u) - pen.lambda * std::abs(u);
  return pen_value(pen, u) - pen_value(pen, v) -
         sgn(v) * pen_right_deriv(pen, std::abs(v)) * (u - v);
}

// Delta_LLA^(t)(u, v) = sum_j [alpha_j Delta_1(u_j, v_j) - Delta_P(u_j, v_j)]
// with alpha the linearization weights of the anchor iterate.
double delta_lla(const PenaltySpec& pen, const VectorXd& alpha, const VectorXd& u,
                 const VectorXd& v) {
  double s = 0.0;
  for (int j = 0; j < u.size(); ++j) {
    s += alpha[j] * delta_abs(u[j], v[j]) - delta_pen(pen, u[j], v[j]);
  }
  return s;
}

// --- capped-l1 pieces for the DC family.

double capped_l1(const VectorXd& beta, double lambda) {
  double s = 0.0;
  for (int j = 0; j < beta.size(); ++j) {
    s += std::min(lambda * std::abs(beta[j]), 0.5 * lambda * lambda);
  }
  return s;
}

// d2(beta) = sum_j max(lambda |beta_j| - lambda^2/2, 0), the convex part that
// gets linearized.
double dc_d2_value(const VectorXd& beta, double lambda) {
  double s = 0.0;
  for (int j = 0; j < beta.size(); ++j) {
    s += std::max(lambda * std::abs(beta[j]) - 0.5 * lambda * lambda, 0.0);
  }
  return s;
}

double dc_d2_ddir(const VectorXd& v, const VectorXd& h, double lambda) {
  double s = 0.0;
  const double knee = 0.5 * lambda;
  for (int j = 0; j < v.size(); ++j) {
    const double a = std::abs(v[j]);
    if (a > knee) {
      s += lambda * sgn(v[j]) * h[j];
    } else if (a == knee && a > 0.0) {
      s += std::max(lambda * sgn(v[j]) * h[j], 0.0);  // one-sided at the knee
    }
  }
  return s;
}

double default_rho(const SurrogateProblem& prob) {
  if (prob.family == SurrogateFamily::mirror_entropy) return 100.0;  // 1/rho = 0.01
  if (prob.loss.smoothness_bound()) return *prob.loss.smoothness_bound();
  return 1.0;
}

void require_varrho_dominates(const LossSpec& loss, double varrho, const char* who) {
  const double nx = spectral_norm(loss.x());
  if (varrho < nx * (1.0 - 1e-9)) {
    throw ConfigError(std::string(who) + ": varrho must be >= ||X||_2 (= " + format_double(nx) +
                      ")");
  }
}

}  // namespace

double SurrogateProblem::objective(const VectorXd& beta) const {
  switch (family) {
    case SurrogateFamily::tisp:
    case SurrogateFamily::lla:
      return loss.value(beta) + pen_total(*penalty, beta);
    case SurrogateFamily::dc:
      return loss.value(beta) + capped_l1(beta, dc_lambda);
    default:
      return loss.value(beta);
  }
}

SurrogateProblem make_gradient_problem(LossSpec loss) {
  return SurrogateProblem{SurrogateFamily::gradient, std::move(loss), std::nullopt, 0, 0.0, 0.0};
}

SurrogateProblem make_mirror_problem(LossSpec loss) {
  return SurrogateProblem{SurrogateFamily::mirror_entropy, std::move(loss), std::nullopt,
                          0,                               0.0,             0.0};
}

SurrogateProblem make_tisp_problem(LossSpec loss, ThresholdingRule rule, double lambda,
                                   double varrho) {
  require_varrho_dominates(loss, varrho, "make_tisp_problem");
  return SurrogateProblem{SurrogateFamily::tisp, std::move(loss),
                          PenaltySpec{std::move(rule), lambda, varrho}, 0, 0.0, 0.0};
}

SurrogateProblem make_quantile_problem(LossSpec loss, int q, double varrho) {
  if (q < 0 || q > loss.p()) throw ConfigError("make_quantile_problem: q must lie in [0, p]");
  if (!(varrho > 0.0)) throw ConfigError("make_quantile_problem: varrho must be positive");
  return SurrogateProblem{SurrogateFamily::quantile, std::move(loss), std::nullopt, q, varrho, 0.0};
}

SurrogateProblem make_lla_problem(LossSpec loss, ThresholdingRule rule, double lambda,
                                  double varrho) {
  require_varrho_dominates(loss, varrho, "make_lla_problem");
  return SurrogateProblem{SurrogateFamily::lla, std::move(loss),
                          PenaltySpec{std::move(rule), lambda, varrho}, 0, 0.0, 0.0};
}

SurrogateProblem make_dc_problem(MatrixXd x, VectorXd y, double lambda) {
  if (lambda < 0.0) throw ConfigError("make_dc_problem: lambda must be nonnegative");
  SurrogateProblem prob{SurrogateFamily::dc, LossSpec::hinge(std::move(x), std::move(y)),
                        std::nullopt,        0,
                        0.0,                 lambda};
  return prob;
}

SurrogateProblem make_sigmoidal_problem(MatrixXd x, VectorXd y) {
  return SurrogateProblem{SurrogateFamily::sigmoidal,
                          LossSpec::sigmoidal(std::move(x), std::move(y)),
                          std::nullopt,
                          0,
                          0.0,
                          0.0};
}

VectorXd gradient_step(const SurrogateProblem& prob, const VectorXd& beta, double rho) {
  if (!(rho > 0.0)) throw DomainError("gradient_step: rho must be positive");
  return beta - prob.loss.grad(beta) / rho;
}

VectorXd mirror_step(const SurrogateProblem& prob, const VectorXd& beta, double rho) {
  if (!(rho > 0.0)) throw DomainError("mirror_step: rho must be positive");
  const VectorXd g = prob.loss.grad(beta);
  VectorXd next(beta.size());
  for (int j = 0; j < beta.size(); ++j) {
    if (!(beta[j] > 0.0)) {
      throw DomainError("mirror_step: iterate left the positive orthant at coordinate " +
                        std::to_string(j));
    }
    next[j] = beta[j] * std::exp(-g[j] / rho);
    if (!(next[j] > 0.0) || !std::isfinite(next[j])) {
      throw DomainError("mirror_step: update left the positive orthant at coordinate " +
                        std::to_string(j));
    }
  }
  return next;
}

VectorXd tisp_step(const SurrogateProblem& prob, const VectorXd& beta) {
  const PenaltySpec& pen = *prob.penalty;
  const VectorXd g = prob.loss.grad(beta);
  VectorXd next(beta.size());
  for (int j = 0; j < beta.size(); ++j) {
    next[j] = pen.rule.apply(pen.varrho * beta[j] - g[j] / pen.varrho, pen.lambda) / pen.varrho;
  }
  return next;
}

VectorXd quantile_tisp_step(const SurrogateProblem& prob, const VectorXd& beta) {
  const VectorXd g = prob.loss.grad(beta);
  return quantile_threshold(beta - g / (prob.varrho * prob.varrho), prob.q);
}

VectorXd lla_weights(const SurrogateProblem& prob, const VectorXd& beta) {
  const PenaltySpec& pen = *prob.penalty;
  VectorXd alpha(beta.size());
  for (int j = 0; j < beta.size(); ++j) {
    alpha[j] = std::abs(pen_right_deriv(pen, pen.varrho * std::abs(beta[j])));
  }
  return alpha;
}

namespace {

// One-sided derivative of s -> loss(base + s*d) + sum_j w_j |base_j + s*d_j|,
// evaluated from the cached line slices r0 = y - X*base (or eta0 = X*base)
// and u = X*d. O(n + p) per evaluation.
struct PenalizedLine {
  const LossSpec& loss;
  const VectorXd& base;
  const VectorXd& d;
  const VectorXd& w;
  VectorXd r0_or_eta0;
  VectorXd u;

  PenalizedLine(const LossSpec& l, const VectorXd& b, const VectorXd& dir, const VectorXd& wts)
      : loss(l), base(b), d(dir), w(wts) {
    u = l.x() * d;
    r0_or_eta0 = l.kind() == LossKind::glm_logistic ? VectorXd(l.x() * b)
                                                    : VectorXd(l.y() - l.x() * b);
  }

  double deriv(double s) const {
    double g = 0.0;
    const int n = loss.n();
    switch (loss.kind()) {
      case LossKind::squared:
        g = -r0_or_eta0.dot(u) + s * u.squaredNorm();
        break;
      case LossKind::glm_gaussian:
        g = (-r0_or_eta0.dot(u) + s * u.squaredNorm()) / loss.sigma2();
        break;
      case LossKind::tukey: {
        const double c = loss.tukey_c();
        for (int i = 0; i < n; ++i) {
          const double t = -r0_or_eta0[i] + s * u[i];
          if (std::abs(t) < c) {
            const double sq = 1.0 - (t / c) * (t / c);
            g += t * sq * sq * u[i];
          }
        }
        break;
      }
      case LossKind::huber: {
        const double clip = loss.huber_clip();
        for (int i = 0; i < n; ++i) {
          const double t = -r0_or_eta0[i] + s * u[i];
          g += (std::abs(t) <= clip ? t : clip * sgn(t)) * u[i];
        }
        break;
      }
      case LossKind::glm_logistic:
        for (int i = 0; i < n; ++i) {
          const double eta = r0_or_eta0[i] + s * u[i];
          g += (1.0 / (1.0 + std::exp(-eta)) - loss.y()[i]) * u[i];
        }
        g /= loss.sigma2();
        break;
      default:
        throw Unsupported("PenalizedLine: unsupported loss kind");
    }
    for (int j = 0; j < base.size(); ++j) {
      if (w[j] == 0.0 || d[j] == 0.0) continue;
      const double v = base[j] + s * d[j];
      g += w[j] * (v != 0.0 ? sgn(v) * d[j] : std::abs(d[j]));
    }
    return g;
  }
};

// The surrogate-step certificate needs one-sided stationarity of the inner
// solution along the single direction back toward the warm start. Coordinate
// descent leaves a small residual along near-flat directions; minimizing the
// penalized objective over that one line removes it. Returns the refined
// point (possibly beta_hat itself).
VectorXd polish_along_warm_start(const LossSpec& loss, const VectorXd& w, const VectorXd& warm,
                                 const VectorXd& beta_hat) {
  const VectorXd d = warm - beta_hat;
  if (d.norm() == 0.0) return beta_hat;
  const PenalizedLine line(loss, beta_hat, d, w);
  if (line.deriv(0.0) >= 0.0) return beta_hat;
  // Scan for the first upward crossing of the one-sided derivative, then
  // bisect it down to machine resolution.
  const int kScan = 64;
  double lo = 0.0;
  double hi = 1.0;
  bool bracketed = false;
  for (int k = 1; k <= kScan; ++k) {
    const double s = static_cast<double>(k) / kScan;
    if (line.deriv(s) >= 0.0) {
      hi = s;
      lo = static_cast<double>(k - 1) / kScan;
      bracketed = true;
      break;
    }
  }
  if (!bracketed) return warm;  // decreasing all the way back: the step is a no-op
  for (int it = 0; it < 80 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (line.deriv(mid) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return beta_hat + hi * d;
}

}  // namespace

VectorXd lla_step(const SurrogateProblem& prob, const VectorXd& beta, double inner_tol,
                  int max_inner) {
  const PenaltySpec& pen = *prob.penalty;
  // Weight on |beta_j| is varrho * alpha_j: the surrogate linearizes the
  // penalty in the varrho*beta scale.
  const VectorXd w = pen.varrho * lla_weights(prob, beta);
  const VectorXd beta_hat = weighted_lasso_cd(prob.loss, w, beta, inner_tol, max_inner);
  return polish_along_warm_start(prob.loss, w, beta, beta_hat);
}

VectorXd dc_step(const SurrogateProblem& prob, const VectorXd& beta) {
  std::vector<bool> indicator(beta.size());
  for (int j = 0; j < beta.size(); ++j) {
    indicator[j] = std::abs(beta[j]) >= 0.5 * prob.dc_lambda;
  }
  auto [lp, map] = formulate_dc_svm(prob.loss.x(), prob.loss.y(), prob.dc_lambda, indicator);
  const LpSolution sol = solve_simplex(lp);
  if (sol.status == LpStatus::infeasible) {
    throw Error("dc_step: subproblem LP reported infeasible");
  }
  if (sol.status == LpStatus::unbounded) {
    // zeta bounds beta, so this can only come from a formulation defect
    throw Error("dc_step: subproblem LP reported unbounded");
  }
  return map.extract_beta(sol.x);
}

std::pair<MatrixXd, MatrixXd> nmf_mur_step(const MatrixXd& w, const MatrixXd& h, const MatrixXd& x,
                                           double rho) {
  if (!(rho > 0.0)) throw DomainError("nmf_mur_step: rho must be positive");
  if ((w.array() <= 0.0).any() || (h.array() <= 0.0).any() || (x.array() <= 0.0).any()) {
    throw DomainError("nmf_mur_step: inputs must be strictly positive");
  }
  const MatrixXd p1 = w * h;
  const MatrixXd m1 = x.array() / p1.array();
  MatrixXd h_next =
      h.array() * (-(w.transpose() * (MatrixXd::Ones(x.rows(), x.cols()) - m1)).array() / rho).exp();
  if (!h_next.allFinite() || (h_next.array() <= 0.0).any()) {
    throw DomainError("nmf_mur_step: H update left the positive orthant");
  }
  const MatrixXd p2 = w * h_next;
  const MatrixXd m2 = x.array() / p2.array();
  MatrixXd w_next =
      w.array() *
      (-((MatrixXd::Ones(x.rows(), x.cols()) - m2) * h_next.transpose()).array() / rho).exp();
  if (!w_next.allFinite() || (w_next.array() <= 0.0).any()) {
    throw DomainError("nmf_mur_step: W update left the positive orthant");
  }
  return {std::move(w_next), std::move(h_next)};
}

VectorXd sigmoidal_step(const SurrogateProblem& prob, const VectorXd& beta) {
  return beta - prob.loss.sigmoidal_solve(prob.loss.grad(beta));
}

VectorXd weighted_lasso_cd(const LossSpec& loss, const VectorXd& weights, VectorXd beta,
                           double tol, int max_sweeps, int* sweeps_used) {
  const MatrixXd& x = loss.x();
  const VectorXd& y = loss.y();
  const int n = loss.n();
  const int p = loss.p();
  if (weights.size() != p || beta.size() != p) {
    throw DomainError("weighted_lasso_cd: dimension mismatch");
  }
  const LossKind kind = loss.kind();
  double curvature_cap = 1.0;  // bound on l0'' along one coordinate
  switch (kind) {
    case LossKind::squared:
    case LossKind::tukey:  // |psi'| <= 1
    case LossKind::huber:
      curvature_cap = 1.0;
      break;
    case LossKind::glm_gaussian:
      curvature_cap = 1.0 / loss.sigma2();
      break;
    case LossKind::glm_logistic:
      curvature_cap = 0.25 / loss.sigma2();
      break;
    default:
      throw Unsupported("weighted_lasso_cd: unsupported loss kind");
  }
  VectorXd col_l(p);
  for (int j = 0; j < p; ++j) col_l[j] = curvature_cap * x.col(j).squaredNorm();

  // residual state: r = y - X b for residual kinds, eta = X b for logistic
  const bool residual_state = kind != LossKind::glm_logistic;
  VectorXd state = residual_state ? VectorXd(y - x * beta) : VectorXd(x * beta);

  const double c = loss.tukey_c();
  const double clip = loss.huber_clip();
  auto coord_grad = [&](int j) -> double {
    double g = 0.0;
    switch (kind) {
      case LossKind::squared: return -x.col(j).dot(state);
      case LossKind::glm_gaussian: return -x.col(j).dot(state) / loss.sigma2();
      case LossKind::tukey:
        for (int i = 0; i < n; ++i) {
          const double r = state[i];
          if (std::abs(r) < c) {
            const double s = 1.0 - (r / c) * (r / c);
            g -= r * s * s * x(i, j);
          }
        }
        return g;
      case LossKind::huber:
        for (int i = 0; i < n; ++i) {
          const double r = state[i];
          g -= (std::abs(r) <= clip ? r : clip * sgn(r)) * x(i, j);
        }
        return g;
      case LossKind::glm_logistic:
        for (int i = 0; i < n; ++i) {
          g += (1.0 / (1.0 + std::exp(-state[i])) - y[i]) * x(i, j);
        }
        return g / loss.sigma2();
      default: return 0.0;
    }
  };

  auto full_grad = [&]() -> VectorXd {
    // refresh the state from scratch at the same time; this caps drift from
    // the incremental updates
    if (residual_state) {
      state = y - x * beta;
    } else {
      state = x * beta;
    }
    VectorXd g(p);
    switch (kind) {
      case LossKind::squared: return -(x.transpose() * state);
      case LossKind::glm_gaussian: return -(x.transpose() * state) / loss.sigma2();
      default:
        for (int j = 0; j < p; ++j) g[j] = coord_grad(j);
        return g;
    }
  };

  auto stationarity = [&](const VectorXd& g) {
    double viol = 0.0;
    for (int j = 0; j < p; ++j) {
      if (beta[j] != 0.0)
        viol = std::max(viol, std::abs(g[j] + weights[j] * sgn(beta[j])));
      else
        viol = std::max(viol, std::max(std::abs(g[j]) - weights[j], 0.0));
    }
    return viol;
  };

  auto sweep = [&](const std::vector<int>& order) {
    double max_delta = 0.0;
    for (int j : order) {
      if (col_l[j] <= 0.0) {
        if (weights[j] > 0.0 && beta[j] != 0.0) beta[j] = 0.0;
        continue;
      }
      const double g = coord_grad(j);
      const double nb = soft(beta[j] - g / col_l[j], weights[j] / col_l[j]);
      const double delta = nb - beta[j];
      if (delta != 0.0) {
        beta[j] = nb;
        if (residual_state)
          state.noalias() -= delta * x.col(j);
        else
          state.noalias() += delta * x.col(j);
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    return max_delta;
  };

  auto objective = [&]() {
    double v;
    switch (kind) {
      case LossKind::squared: v = 0.5 * state.squaredNorm(); break;
      case LossKind::glm_gaussian: v = 0.5 * state.squaredNorm() / loss.sigma2(); break;
      case LossKind::tukey: {
        v = 0.0;
        for (int i = 0; i < n; ++i) {
          const double a = std::abs(state[i]);
          if (a >= c) {
            v += c * c / 6.0;
          } else {
            const double sq = 1.0 - (state[i] / c) * (state[i] / c);
            v += c * c / 6.0 * (1.0 - sq * sq * sq);
          }
        }
        break;
      }
      case LossKind::huber: {
        v = 0.0;
        for (int i = 0; i < n; ++i) {
          const double a = std::abs(state[i]);
          v += a <= clip ? 0.5 * a * a : clip * a - 0.5 * clip * clip;
        }
        break;
      }
      case LossKind::glm_logistic: {
        v = 0.0;
        for (int i = 0; i < n; ++i) {
          const double eta = state[i];
          const double lse = eta > 35.0 ? eta : (eta < -35.0 ? std::exp(eta) : std::log1p(std::exp(eta)));
          v += -y[i] * eta + lse;
        }
        v /= loss.sigma2();
        break;
      }
      default: v = 0.0;
    }
    for (int j = 0; j < p; ++j) v += weights[j] * std::abs(beta[j]);
    return v;
  };

  std::vector<int> all(p);
  for (int j = 0; j < p; ++j) all[j] = j;

  // A wide zero-weight block makes cyclic descent crawl along near-flat
  // directions (and stalls it outright once the block can interpolate). That
  // block is an unpenalized least-squares subproblem, so eliminate it exactly
  // by QR and alternate with sweeps over the penalized coordinates. Argmin
  // ties are resolved by the rank-revealing factorization, deterministically.
  std::vector<int> free_idx;
  for (int j = 0; j < p; ++j) {
    if (weights[j] == 0.0 && col_l[j] > 0.0) free_idx.push_back(j);
  }
  const bool block_kind = kind == LossKind::squared || kind == LossKind::glm_gaussian ||
                          kind == LossKind::tukey || kind == LossKind::huber;
  if (block_kind && static_cast<int>(free_idx.size()) >= std::max(16, n / 3)) {
    std::vector<int> pen_idx;
    for (int j = 0; j < p; ++j) {
      if (weights[j] != 0.0) pen_idx.push_back(j);
    }
    MatrixXd xf(n, free_idx.size());
    for (std::size_t k = 0; k < free_idx.size(); ++k) xf.col(k) = x.col(free_idx[k]);
    // complete orthogonal decomposition: least squares, and the minimum-norm
    // representative when the block is wider than n (argmin tie-break)
    const Eigen::CompleteOrthogonalDecomposition<MatrixXd> qr(xf);
    const bool exact_block = kind == LossKind::squared || kind == LossKind::glm_gaussian;
    auto block_objective = [&]() {
      double v = 0.0;
      switch (kind) {
        case LossKind::squared: v = 0.5 * state.squaredNorm(); break;
        case LossKind::glm_gaussian: v = 0.5 * state.squaredNorm() / loss.sigma2(); break;
        case LossKind::tukey:
          for (int i = 0; i < n; ++i) {
            const double a = std::abs(state[i]);
            if (a >= c) {
              v += c * c / 6.0;
            } else {
              const double s = 1.0 - (state[i] / c) * (state[i] / c);
              v += c * c / 6.0 * (1.0 - s * s * s);
            }
          }
          break;
        case LossKind::huber:
          for (int i = 0; i < n; ++i) {
            const double a = std::abs(state[i]);
            v += a <= clip ? 0.5 * a * a : clip * a - 0.5 * clip * clip;
          }
          break;
        default: break;
      }
      for (int j = 0; j < p; ++j) v += weights[j] * std::abs(beta[j]);
      return v;
    };
    int sweeps = 0;
    while (sweeps < max_sweeps) {
      ++sweeps;
      // exact free-block update on the residual with the penalized part fixed
      VectorXd bf(free_idx.size());
      for (std::size_t k = 0; k < free_idx.size(); ++k) bf[k] = beta[free_idx[k]];
      const VectorXd target = state + xf * bf;
      const VectorXd bf_new = qr.solve(target);
      const VectorXd state_new = target - xf * bf_new;
      double f_delta = (bf_new - bf).lpNorm<Eigen::Infinity>();
      bool accepted = true;
      if (exact_block) {
        state = state_new;
      } else {
        // least squares majorizes the robust kinds only inside the quadratic
        // zone; keep the update when it does not raise the objective
        const double before = block_objective();
        const VectorXd state_old = state;
        state = state_new;
        VectorXd bf_old = bf;
        for (std::size_t k = 0; k < free_idx.size(); ++k) beta[free_idx[k]] = bf_new[k];
        if (block_objective() > before + 1e-12 * (1.0 + std::abs(before))) {
          state = state_old;
          for (std::size_t k = 0; k < free_idx.size(); ++k) beta[free_idx[k]] = bf_old[k];
          accepted = false;
          f_delta = 0.0;
        }
      }
      if (exact_block && accepted) {
        for (std::size_t k = 0; k < free_idx.size(); ++k) beta[free_idx[k]] = bf_new[k];
      }
      double p_delta = 0.0;
      const double ctol = tol * (1.0 + beta.lpNorm<Eigen::Infinity>());
      for (int inner = 0; inner < 8 && sweeps < max_sweeps; ++inner) {
        ++sweeps;
        p_delta = sweep(pen_idx);
        if (p_delta <= ctol) break;
      }
      if (f_delta <= ctol && p_delta <= ctol) {
        if (sweeps_used) *sweeps_used = sweeps;
        full_grad();
        return beta;
      }
      if (!accepted) break;  // robust kind rejected the block step: fall through to CD
    }
    if (sweeps >= max_sweeps) {
      if (sweeps_used) *sweeps_used = sweeps;
      full_grad();
      return beta;
    }
  }

  // Convergence is a small coordinate change over a full sweep. Zero-weight
  // blocks wider than n make the subproblem singular along flat directions
  // that carry no objective mass, so a relative progress stall also exits;
  // the caller's directional polish covers the surrogate-step certificate.
  int sweeps = 0;
  double first_drop = -1.0;
  double obj_prev = objective();
  auto progress_stalled = [&]() {
    const double obj_now = objective();
    const double drop = obj_prev - obj_now;
    obj_prev = obj_now;
    if (first_drop < 0.0 && drop > 0.0) first_drop = drop;
    return drop <= std::max(1e-6 * std::max(first_drop, 0.0), 1e-12 * (1.0 + std::abs(obj_now)));
  };
  while (sweeps < max_sweeps) {
    ++sweeps;
    const double full_delta = sweep(all);
    const double ctol = tol * (1.0 + beta.lpNorm<Eigen::Infinity>());
    if (full_delta <= ctol) {
      if (sweeps_used) *sweeps_used = sweeps;
      return beta;
    }
    bool stalled = progress_stalled();
    std::vector<int> active;
    for (int j = 0; j < p; ++j) {
      if (beta[j] != 0.0) active.push_back(j);
    }
    while (!stalled && !active.empty() && sweeps < max_sweeps) {
      ++sweeps;
      const double active_delta = sweep(active);
      stalled = progress_stalled();
      if (active_delta <= 0.1 * ctol) break;
    }
    if (stalled) {
      if (sweeps_used) *sweeps_used = sweeps;
      full_grad();  // leaves the incrementally tracked state freshly recomputed
      return beta;
    }
    full_grad();
    obj_prev = objective();
  }
  const double viol = stationarity(full_grad());
  if (viol <= 1e-3 * (1.0 + weights.lpNorm<Eigen::Infinity>())) {
    // budget exhausted but the iterate is stationary to working precision
    if (sweeps_used) *sweeps_used = sweeps;
    return beta;
  }
  throw InnerSolverError("weighted_lasso_cd: stationarity residual " + format_double(viol) +
                             " after " + std::to_string(sweeps) + " sweeps",
                         viol);
}

namespace {

// Family term (2 sym-Delta_psi + Delta_f)(a, b) in its per-family closed form.
struct TermInput {
  const VectorXd& a;
  const VectorXd& b;
  double l_a;
  double l_b;
  const VectorXd& grad_a;      // empty for lla/dc
  double tisp_concavity = 0.0; // cached L_Theta (grid scans are costly for custom rules)
};

double opt_error_term(const SurrogateProblem& prob, double rho, const TermInput& in) {
  const auto back_delta_l = [&]() {
    return in.l_b - in.l_a - in.grad_a.dot(in.b - in.a);
  };
  switch (prob.family) {
    case SurrogateFamily::gradient:
      return 2.0 * rho * d2(in.a, in.b) - back_delta_l();
    case SurrogateFamily::mirror_entropy: {
      double sym = 0.0;
      for (int j = 0; j < in.a.size(); ++j) {
        sym += (std::log(in.a[j]) - std::log(in.b[j])) * (in.a[j] - in.b[j]);
      }
      return rho * sym - back_delta_l();
    }
    case SurrogateFamily::tisp: {
      const PenaltySpec& pen = *prob.penalty;
      return pen.varrho * pen.varrho * (2.0 - in.tisp_concavity) * d2(in.a, in.b) -
             back_delta_l();
    }
    case SurrogateFamily::quantile:
      return prob.varrho * prob.varrho * d2(in.a, in.b) - back_delta_l();
    case SurrogateFamily::sigmoidal: {
      VectorXd xd = prob.loss.x() * (in.a - in.b);
      double q = 0.0;
      for (int i = 0; i < xd.size(); ++i) {
        q += (std::abs(0.1 * prob.loss.y()[i]) + 0.08) * xd[i] * xd[i];
      }
      return q - back_delta_l();  // 2 * D_B - backward Delta_f
    }
    case SurrogateFamily::lla: {
      const PenaltySpec& pen = *prob.penalty;
      const VectorXd alpha = lla_weights(prob, in.a);
      const VectorXd u = pen.varrho * in.a;
      const VectorXd v = pen.varrho * in.b;
      const double two_sym = delta_lla(pen, alpha, u, v) + delta_lla(pen, alpha, v, u);
      double delta_f = in.l_a - in.l_b - prob.loss.ddir(in.b, in.a - in.b);
      for (int j = 0; j < u.size(); ++j) delta_f += delta_pen(pen, u[j], v[j]);
      return two_sym + delta_f;
    }
    case SurrogateFamily::dc: {
      const double dl = in.l_a - in.l_b - prob.loss.ddir(in.b, in.a - in.b);
      const double back_d2_gap = dc_d2_value(in.b, prob.dc_lambda) -
                                 dc_d2_value(in.a, prob.dc_lambda) -
                                 dc_d2_ddir(in.a, in.b - in.a, prob.dc_lambda);
      const double d1_gap = prob.dc_lambda * [&] {
        double s = 0.0;
        for (int j = 0; j < in.a.size(); ++j) s += delta_abs(in.a[j], in.b[j]);
        return s;
      }();
      return dl + back_d2_gap + d1_gap;
    }
  }
  return 0.0;
}

VectorXd family_step(const SurrogateProblem& prob, const VectorXd& beta, double rho,
                     const RunConfig& config) {
  switch (prob.family) {
    case SurrogateFamily::gradient: return gradient_step(prob, beta, rho);
    case SurrogateFamily::mirror_entropy: return mirror_step(prob, beta, rho);
    case SurrogateFamily::tisp: return tisp_step(prob, beta);
    case SurrogateFamily::quantile: return quantile_tisp_step(prob, beta);
    case SurrogateFamily::lla:
      return lla_step(prob, beta, config.lla_inner_tol, config.lla_max_inner);
    case SurrogateFamily::dc: return dc_step(prob, beta);
    case SurrogateFamily::sigmoidal: return sigmoidal_step(prob, beta);
  }
  throw Unsupported("run: unknown surrogate family");
}

bool family_uses_grad_cache(SurrogateFamily family) {
  switch (family) {
    case SurrogateFamily::gradient:
    case SurrogateFamily::mirror_entropy:
    case SurrogateFamily::tisp:
    case SurrogateFamily::quantile:
    case SurrogateFamily::sigmoidal:
      return true;
    default:
      return false;
  }
}

}  // namespace

double IterateTrace::max_bound_violation() const {
  if (records.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double f0 = records.front().objective;
  double prefix = 0.0;
  double worst = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t t = 0; t + 1 < records.size(); ++t) {
    if (std::isnan(records[t].opt_error)) break;
    prefix += records[t].opt_error;
    const double bound = f0 - records[t + 1].objective;
    worst = std::max(worst, (prefix - bound) / static_cast<double>(t + 1));
    any = true;
  }
  return any ? worst : std::numeric_limits<double>::quiet_NaN();
}

double IterateTrace::opt_error_average(int T) const {
  if (T < 0 || T + 1 >= static_cast<int>(records.size())) {
    throw IndexError("opt_error_average: T out of range");
  }
  double s = 0.0;
  for (int t = 0; t <= T; ++t) {
    if (std::isnan(records[t].opt_error)) {
      throw IndexError("opt_error_average: missing error terms (run recorded without diagnostics)");
    }
    s += records[t].opt_error;
  }
  return s / (T + 1);
}

double opt_error_average(const IterateTrace& trace, int T) { return trace.opt_error_average(T); }

double stat_error_measure(const SurrogateProblem& prob, const VectorXd& beta_star,
                          const VectorXd& beta) {
  switch (prob.family) {
    case SurrogateFamily::tisp: {
      const double vr = prob.penalty->varrho;
      return vr * vr * d2(beta_star, beta) - prob.loss.bregman_gap(beta_star, beta);
    }
    case SurrogateFamily::quantile:
      return prob.varrho * prob.varrho * d2(beta_star, beta) -
             prob.loss.bregman_gap(beta_star, beta);
    case SurrogateFamily::lla: {
      const PenaltySpec& pen = *prob.penalty;
      const VectorXd alpha = lla_weights(prob, beta);
      return delta_lla(pen, alpha, pen.varrho * beta_star, pen.varrho * beta);
    }
    default:
      return d2(beta_star, beta);
  }
}

IterateTrace run(const SurrogateProblem& prob, VectorXd beta0, const RunConfig& config) {
  IterateTrace trace;
  const double rho = config.rho > 0.0 ? config.rho : default_rho(prob);
  const bool rec = config.record_iterates;
  const bool grad_cache = family_uses_grad_cache(prob.family);

  auto penalty_part = [&](const VectorXd& b) -> double {
    switch (prob.family) {
      case SurrogateFamily::tisp:
      case SurrogateFamily::lla:
        return pen_total(*prob.penalty, b);
      case SurrogateFamily::dc:
        return capped_l1(b, prob.dc_lambda);
      default:
        return 0.0;
    }
  };

  VectorXd beta = std::move(beta0);
  double l_cur, obj_cur;
  try {
    l_cur = prob.loss.value(beta);
    obj_cur = l_cur + penalty_part(beta);
  } catch (const Error& e) {
    throw SolverAbort(std::string("run: objective undefined at the start point: ") + e.what(),
                      std::move(trace));
  }

  auto push_record = [&](int iter, double obj) {
    if (!rec) return;
    IterateRecord r;
    r.iter = iter;
    r.objective = obj;
    r.rho = rho;
    if (config.beta_star) r.stat_error = stat_error_measure(prob, *config.beta_star, beta);
    trace.records.push_back(std::move(r));
  };

  push_record(0, obj_cur);
  trace.converged = false;
  int steps = 0;
  VectorXd grad_cur;
  const double concavity_cache =
      prob.family == SurrogateFamily::tisp ? prob.penalty->rule.concavity() : 0.0;
  for (int t = 0; t < config.max_iter; ++t) {
    VectorXd next;
    double l_next, obj_next;
    try {
      if (grad_cache) grad_cur = prob.loss.grad(beta);
      switch (prob.family) {
        case SurrogateFamily::gradient: next = beta - grad_cur / rho; break;
        case SurrogateFamily::mirror_entropy: {
          next.resize(beta.size());
          for (int j = 0; j < beta.size(); ++j) {
            if (!(beta[j] > 0.0)) {
              throw DomainError("mirror step left the positive orthant at coordinate " +
                                std::to_string(j));
            }
            next[j] = beta[j] * std::exp(-grad_cur[j] / rho);
            if (!(next[j] > 0.0) || !std::isfinite(next[j])) {
              throw DomainError("mirror step left the positive orthant at coordinate " +
                                std::to_string(j));
            }
          }
          break;
        }
        case SurrogateFamily::tisp: {
          const PenaltySpec& pen = *prob.penalty;
          next.resize(beta.size());
          for (int j = 0; j < beta.size(); ++j) {
            next[j] =
                pen.rule.apply(pen.varrho * beta[j] - grad_cur[j] / pen.varrho, pen.lambda) /
                pen.varrho;
          }
          break;
        }
        case SurrogateFamily::quantile:
          next = quantile_threshold(beta - grad_cur / (prob.varrho * prob.varrho), prob.q);
          break;
        case SurrogateFamily::sigmoidal:
          next = beta - prob.loss.sigmoidal_solve(grad_cur);
          break;
        default:
          next = family_step(prob, beta, rho, config);
      }
      l_next = prob.loss.value(next);
      obj_next = l_next + penalty_part(next);
    } catch (const Error& e) {
      trace.final_beta = beta;
      trace.iterations = steps;
      throw SolverAbort("run: step " + std::to_string(t) + " failed: " + e.what(),
                        std::move(trace));
    }
    if (rec) {
      trace.records.back().opt_error = opt_error_term(
          prob, rho, TermInput{beta, next, l_cur, l_next, grad_cur, concavity_cache});
    }
    const double residual = (next - beta).norm();
    const bool done = residual <= config.tol * (1.0 + beta.norm());
    beta = std::move(next);
    l_cur = l_next;
    obj_cur = obj_next;
    ++steps;
    push_record(steps, obj_cur);
    trace.fixed_point_residual = residual;
    if (done) {
      trace.converged = true;
      break;
    }
  }
  trace.final_beta = std::move(beta);
  trace.iterations = steps;
  return trace;
}

FixedPointReport fixed_point_check(const SurrogateProblem& prob, const VectorXd& beta_hat,
                                   double tol) {
  RunConfig cfg;
  const VectorXd next = family_step(prob, beta_hat, default_rho(prob), cfg);
  FixedPointReport report;
  report.residual = (next - beta_hat).norm();
  report.is_fixed = report.residual <= tol;
  return report;
}

}  // namespace bregman
