#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>

#include "bregman/errors.hpp"
#include "bregman/gbf.hpp"

namespace bregman {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class LossKind {
  squared,
  glm_gaussian,
  glm_logistic,
  glm_poisson,
  itakura_saito,
  kl_nmf,
  huber,
  tukey,
  hinge,
  sigmoidal,
};

// Loss on beta through the linear predictor eta = X beta. Immutable after
// construction; evaluations are re-entrant.
class LossSpec {
 public:
  static LossSpec squared(MatrixXd x, VectorXd y);
  // GLM kinds carry a fixed known dispersion sigma2 (default 1).
  static LossSpec glm(LossKind kind, MatrixXd x, VectorXd y, double sigma2 = 1.0);
  static LossSpec itakura_saito(MatrixXd x, VectorXd y);
  static LossSpec kl_nmf(MatrixXd x, VectorXd y);
  // Huber with clip level a * sigma.
  static LossSpec huber(MatrixXd x, VectorXd y, double a, double sigma);
  // Tukey biweight with explicit tuning constant c.
  static LossSpec tukey(MatrixXd x, VectorXd y, double c);
  // Tukey with c = 4.685 * robust_scale(y - X * pilot_beta).
  static LossSpec tukey_from_pilot(MatrixXd x, VectorXd y, const VectorXd& pilot_beta);
  static LossSpec hinge(MatrixXd x, VectorXd y);  // y in {-1, +1}
  // 0.5 * sum (y_i - pi(x_i' beta))^2; the preconditioner
  // B = X' diag(|0.1 y_i| + 0.08) X is factored once here.
  static LossSpec sigmoidal(MatrixXd x, VectorXd y);

  LossKind kind() const { return kind_; }
  const MatrixXd& x() const { return x_; }
  const VectorXd& y() const { return y_; }
  int n() const { return static_cast<int>(x_.rows()); }
  int p() const { return static_cast<int>(x_.cols()); }
  double sigma2() const { return sigma2_; }
  double huber_clip() const { return huber_a_ * huber_sigma_; }
  double tukey_c() const { return tukey_c_; }
  std::optional<double> smoothness_bound() const { return smoothness_bound_; }

  double value(const VectorXd& beta) const;
  VectorXd grad(const VectorXd& beta) const;  // Unsupported for hinge
  // One-sided directional derivative; exact at hinge kinks.
  double ddir(const VectorXd& beta, const VectorXd& h) const;

  // Delta_l(a, b) = l(a) - l(b) - ddir(b; a - b).
  double bregman_gap(const VectorXd& a, const VectorXd& b) const;

  // Apply the sigmoidal preconditioner inverse B^{-1} v.
  VectorXd sigmoidal_solve(const VectorXd& v) const;

  // gbf-core view of this loss.
  DirectionalFunction as_directional() const;

 private:
  LossSpec() = default;

  LossKind kind_ = LossKind::squared;
  MatrixXd x_;
  VectorXd y_;
  double sigma2_ = 1.0;
  double huber_a_ = 1.345;
  double huber_sigma_ = 1.0;
  double tukey_c_ = 4.685;
  std::optional<double> smoothness_bound_;
  std::shared_ptr<Eigen::LDLT<MatrixXd>> sigmoidal_b_;  // factored once
};

// Effective noise -grad l0(X beta*) at the generating truth. GLM kinds give
// y - grad b(X beta*); squared gives y - X beta*; huber clips the raw
// residual at the level a*sigma with its sign. Hinge is Unsupported.
struct EffectiveNoise {
  VectorXd epsilon;
  LossKind source_kind;
};
EffectiveNoise effective_noise(const LossSpec& spec, const VectorXd& beta_star);

// Delta_b(eta2, eta1) / sigma^2, the KL divergence between the GLM densities
// at eta1 and eta2 (Gaussian / Bernoulli / Poisson cumulants), evaluated via
// gbf-core on the cumulant function.
double glm_kl_check(const LossSpec& spec, const VectorXd& eta1, const VectorXd& eta2);

// Median absolute deviation about the median, divided by 0.6745. Throws
// DegenerateScale when all residuals are identical.
double robust_scale(const VectorXd& residuals);

}  // namespace bregman
