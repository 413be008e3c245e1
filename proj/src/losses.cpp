#include "bregman/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bregman/util.hpp"

namespace bregman {

namespace {

double log1pexp(double u) {
  // log(1 + e^u) without overflow
  if (u > 35.0) return u;
  if (u < -35.0) return std::exp(u);
  return std::log1p(std::exp(u));
}

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Tukey biweight score: t (1 - (t/c)^2)^2 on |t| <= c, 0 beyond.
double tukey_psi(double t, double c) {
  const double a = std::abs(t);
  if (a > c) return 0.0;
  const double s = 1.0 - (t / c) * (t / c);
  return t * s * s;
}

// Integral of the score from 0 to |r|: c^2/6 [1 - (1 - (r/c)^2)^3], saturating at c^2/6.
double tukey_rho(double r, double c) {
  const double a = std::abs(r);
  if (a >= c) return c * c / 6.0;
  const double s = 1.0 - (r / c) * (r / c);
  return c * c / 6.0 * (1.0 - s * s * s);
}

}  // namespace

LossSpec LossSpec::squared(MatrixXd x, VectorXd y) {
  LossSpec s;
  s.kind_ = LossKind::squared;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  const double nx = spectral_norm(s.x_);
  s.smoothness_bound_ = nx * nx;
  return s;
}

LossSpec LossSpec::glm(LossKind kind, MatrixXd x, VectorXd y, double sigma2) {
  if (kind != LossKind::glm_gaussian && kind != LossKind::glm_logistic &&
      kind != LossKind::glm_poisson) {
    throw DomainError("LossSpec::glm: kind must be a GLM kind");
  }
  LossSpec s;
  s.kind_ = kind;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  s.sigma2_ = sigma2;
  const double nx = spectral_norm(s.x_);
  if (kind == LossKind::glm_gaussian) s.smoothness_bound_ = nx * nx / sigma2;
  if (kind == LossKind::glm_logistic) s.smoothness_bound_ = nx * nx / (4.0 * sigma2);
  return s;
}

LossSpec LossSpec::itakura_saito(MatrixXd x, VectorXd y) {
  LossSpec s;
  s.kind_ = LossKind::itakura_saito;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  return s;
}

LossSpec LossSpec::kl_nmf(MatrixXd x, VectorXd y) {
  LossSpec s;
  s.kind_ = LossKind::kl_nmf;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  return s;
}

LossSpec LossSpec::huber(MatrixXd x, VectorXd y, double a, double sigma) {
  LossSpec s;
  s.kind_ = LossKind::huber;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  s.huber_a_ = a;
  s.huber_sigma_ = sigma;
  const double nx = spectral_norm(s.x_);
  s.smoothness_bound_ = nx * nx;
  return s;
}

LossSpec LossSpec::tukey(MatrixXd x, VectorXd y, double c) {
  if (!(c > 0.0)) throw DomainError("tukey: c must be positive");
  LossSpec s;
  s.kind_ = LossKind::tukey;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  s.tukey_c_ = c;
  // psi' is bounded by 1, so the loss curvature is dominated by X'X.
  const double nx = spectral_norm(s.x_);
  s.smoothness_bound_ = nx * nx;
  return s;
}

LossSpec LossSpec::tukey_from_pilot(MatrixXd x, VectorXd y, const VectorXd& pilot_beta) {
  const VectorXd r = y - x * pilot_beta;
  const double sigma_hat = robust_scale(r);
  return tukey(std::move(x), std::move(y), 4.685 * sigma_hat);
}

LossSpec LossSpec::hinge(MatrixXd x, VectorXd y) {
  LossSpec s;
  s.kind_ = LossKind::hinge;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  return s;
}

LossSpec LossSpec::sigmoidal(MatrixXd x, VectorXd y) {
  LossSpec s;
  s.kind_ = LossKind::sigmoidal;
  s.x_ = std::move(x);
  s.y_ = std::move(y);
  VectorXd d(s.y_.size());
  for (int i = 0; i < s.y_.size(); ++i) d[i] = std::abs(0.1 * s.y_[i]) + 0.08;
  const MatrixXd b = s.x_.transpose() * d.asDiagonal() * s.x_;
  auto ldlt = std::make_shared<Eigen::LDLT<MatrixXd>>(b);
  if (ldlt->info() != Eigen::Success || !ldlt->isPositive()) {
    throw FactorizationError("sigmoidal: preconditioner B is singular or indefinite");
  }
  // LDLT succeeds on semidefinite input; reject a numerically singular B.
  if (ldlt->vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt->vectorD().maxCoeff())) {
    throw FactorizationError("sigmoidal: preconditioner B is singular or indefinite");
  }
  s.sigmoidal_b_ = std::move(ldlt);
  return s;
}

double LossSpec::value(const VectorXd& beta) const {
  const VectorXd eta = x_ * beta;
  switch (kind_) {
    case LossKind::squared: return 0.5 * (y_ - eta).squaredNorm();
    case LossKind::glm_gaussian: return (-y_.dot(eta) + 0.5 * eta.squaredNorm()) / sigma2_;
    case LossKind::glm_logistic: {
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) s += -y_[i] * eta[i] + log1pexp(eta[i]);
      return s / sigma2_;
    }
    case LossKind::glm_poisson: {
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) s += -y_[i] * eta[i] + std::exp(eta[i]);
      return s / sigma2_;
    }
    case LossKind::itakura_saito: {
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) {
        if (!(eta[i] > 0.0)) {
          throw DomainError("itakura_saito: nonpositive fitted value at row " + std::to_string(i));
        }
        const double r = y_[i] / eta[i];
        s += r - std::log(r) - 1.0;
      }
      return s;
    }
    case LossKind::kl_nmf: {
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) {
        if (!(eta[i] > 0.0)) {
          throw DomainError("kl_nmf: nonpositive fitted value at row " + std::to_string(i));
        }
        s += y_[i] * std::log(y_[i] / eta[i]) - y_[i] + eta[i];
      }
      return s;
    }
    case LossKind::huber: {
      const double clip = huber_clip();
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) {
        const double r = y_[i] - eta[i];
        s += std::abs(r) <= clip ? 0.5 * r * r : clip * std::abs(r) - 0.5 * clip * clip;
      }
      return s;
    }
    case LossKind::tukey: {
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) s += tukey_rho(eta[i] - y_[i], tukey_c_);
      return s;
    }
    case LossKind::hinge: {
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) s += std::max(0.0, 1.0 - y_[i] * eta[i]);
      return s;
    }
    case LossKind::sigmoidal: {
      double s = 0.0;
      for (int i = 0; i < eta.size(); ++i) {
        const double d = y_[i] - logistic(eta[i]);
        s += 0.5 * d * d;
      }
      return s;
    }
  }
  return 0.0;
}

VectorXd LossSpec::grad(const VectorXd& beta) const {
  const VectorXd eta = x_ * beta;
  VectorXd g0(eta.size());  // d l0 / d eta
  switch (kind_) {
    case LossKind::squared: g0 = eta - y_; break;
    case LossKind::glm_gaussian: g0 = (eta - y_) / sigma2_; break;
    case LossKind::glm_logistic:
      for (int i = 0; i < eta.size(); ++i) g0[i] = (logistic(eta[i]) - y_[i]) / sigma2_;
      break;
    case LossKind::glm_poisson:
      for (int i = 0; i < eta.size(); ++i) g0[i] = (std::exp(eta[i]) - y_[i]) / sigma2_;
      break;
    case LossKind::itakura_saito:
      for (int i = 0; i < eta.size(); ++i) {
        if (!(eta[i] > 0.0)) {
          throw DomainError("itakura_saito: nonpositive fitted value at row " + std::to_string(i));
        }
        g0[i] = (eta[i] - y_[i]) / (eta[i] * eta[i]);
      }
      break;
    case LossKind::kl_nmf:
      for (int i = 0; i < eta.size(); ++i) {
        if (!(eta[i] > 0.0)) {
          throw DomainError("kl_nmf: nonpositive fitted value at row " + std::to_string(i));
        }
        g0[i] = 1.0 - y_[i] / eta[i];
      }
      break;
    case LossKind::huber: {
      const double clip = huber_clip();
      for (int i = 0; i < eta.size(); ++i) {
        const double r = y_[i] - eta[i];
        g0[i] = std::abs(r) <= clip ? -r : -clip * ((r > 0) - (r < 0));
      }
      break;
    }
    case LossKind::tukey:
      for (int i = 0; i < eta.size(); ++i) g0[i] = tukey_psi(eta[i] - y_[i], tukey_c_);
      break;
    case LossKind::hinge:
      throw Unsupported("hinge loss has no gradient; use ddir");
    case LossKind::sigmoidal:
      for (int i = 0; i < eta.size(); ++i) {
        const double u = logistic(eta[i]);
        g0[i] = -(u - u * u) * (y_[i] - u);
      }
      break;
  }
  return x_.transpose() * g0;
}

double LossSpec::ddir(const VectorXd& beta, const VectorXd& h) const {
  if (kind_ != LossKind::hinge) return grad(beta).dot(h);
  const VectorXd eta = x_ * beta;
  const VectorXd xh = x_ * h;
  double s = 0.0;
  for (int i = 0; i < eta.size(); ++i) {
    const double margin = 1.0 - y_[i] * eta[i];
    const double slope = -y_[i] * xh[i];  // d margin / d eps
    if (margin > 0.0)
      s += slope;
    else if (margin == 0.0)
      s += std::max(slope, 0.0);  // right derivative of (.)_+ at the kink
  }
  return s;
}

double LossSpec::bregman_gap(const VectorXd& a, const VectorXd& b) const {
  return value(a) - value(b) - ddir(b, a - b);
}

VectorXd LossSpec::sigmoidal_solve(const VectorXd& v) const {
  if (!sigmoidal_b_) throw Unsupported("sigmoidal_solve: loss is not sigmoidal");
  return sigmoidal_b_->solve(v);
}

DirectionalFunction LossSpec::as_directional() const {
  DirectionalFunction f;
  f.value = [this](const VectorXd& b) { return value(b); };
  f.ddir = [this](const VectorXd& b, const VectorXd& h) { return ddir(b, h); };
  if (kind_ != LossKind::hinge) {
    f.gradient = [this](const VectorXd& b) { return grad(b); };
  }
  f.domain_dim = p();
  return f;
}

EffectiveNoise effective_noise(const LossSpec& spec, const VectorXd& beta_star) {
  const VectorXd eta = spec.x() * beta_star;
  VectorXd eps(eta.size());
  switch (spec.kind()) {
    case LossKind::squared:
    case LossKind::glm_gaussian:
      eps = spec.y() - eta;
      break;
    case LossKind::glm_logistic:
      for (int i = 0; i < eta.size(); ++i) eps[i] = spec.y()[i] - logistic(eta[i]);
      break;
    case LossKind::glm_poisson:
      for (int i = 0; i < eta.size(); ++i) eps[i] = spec.y()[i] - std::exp(eta[i]);
      break;
    case LossKind::huber: {
      const double clip = spec.huber_clip();
      for (int i = 0; i < eta.size(); ++i) {
        const double raw = spec.y()[i] - eta[i];
        eps[i] = std::abs(raw) <= clip ? raw : clip * ((raw > 0) - (raw < 0));
      }
      break;
    }
    case LossKind::tukey:
      for (int i = 0; i < eta.size(); ++i) eps[i] = -tukey_psi(eta[i] - spec.y()[i], spec.tukey_c());
      break;
    case LossKind::hinge:
      throw Unsupported("effective_noise: hinge loss is not differentiable at the margins");
    default:
      throw Unsupported("effective_noise: unsupported loss kind");
  }
  return EffectiveNoise{eps, spec.kind()};
}

double glm_kl_check(const LossSpec& spec, const VectorXd& eta1, const VectorXd& eta2) {
  const int n = static_cast<int>(eta1.size());
  DirectionalFunction cumulant;
  switch (spec.kind()) {
    case LossKind::glm_gaussian:
      cumulant = DirectionalFunction::smooth(
          [](const VectorXd& e) { return 0.5 * e.squaredNorm(); },
          [](const VectorXd& e) { return e; }, n);
      break;
    case LossKind::glm_logistic:
      cumulant = DirectionalFunction::smooth(
          [](const VectorXd& e) {
            double s = 0.0;
            for (int i = 0; i < e.size(); ++i) s += log1pexp(e[i]);
            return s;
          },
          [](const VectorXd& e) {
            VectorXd g(e.size());
            for (int i = 0; i < e.size(); ++i) g[i] = logistic(e[i]);
            return g;
          },
          n);
      break;
    case LossKind::glm_poisson:
      cumulant = DirectionalFunction::smooth(
          [](const VectorXd& e) {
            double s = 0.0;
            for (int i = 0; i < e.size(); ++i) s += std::exp(e[i]);
            return s;
          },
          [](const VectorXd& e) {
            VectorXd g(e.size());
            for (int i = 0; i < e.size(); ++i) g[i] = std::exp(e[i]);
            return g;
          },
          n);
      break;
    default:
      throw Unsupported("glm_kl_check: loss kind is not a GLM");
  }
  return eval_gbf(cumulant, eta2, eta1).forward / spec.sigma2();
}

double robust_scale(const VectorXd& residuals) {
  const int n = static_cast<int>(residuals.size());
  if (n < 2) throw DomainError("robust_scale: need at least two residuals");
  std::vector<double> v(residuals.data(), residuals.data() + n);
  const double med = median(v);
  for (double& t : v) t = std::abs(t - med);
  const double mad = median(std::move(v));
  if (mad == 0.0) throw DegenerateScale("robust_scale: all residuals identical");
  return mad / 0.6745;
}

}  // namespace bregman
