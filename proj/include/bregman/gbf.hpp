#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "bregman/errors.hpp"

namespace bregman {

using Eigen::VectorXd;

// Module-level tolerances shared by the property tests and the solvers.
namespace tol {
inline constexpr double kLinearity = 1e-9;        // Delta_{a psi + b phi} additivity
inline constexpr double kAffineComposition = 1e-9;
inline constexpr double kConvexFloor = -1e-10;    // forward >= floor for convex psi
inline constexpr double kIdempotence = 1e-9;
inline constexpr double kIntegralForm = 1e-7;     // quadrature vs closed form
inline constexpr double kGradConsistencyRel = 1e-5;
inline constexpr double kGradPairing = 1e-8;      // ddir vs <grad, h>
}  // namespace tol

// Evaluation oracle for a (possibly nonsmooth, nonconvex) function: the value
// f(beta) paired with the one-sided directional derivative ddir(beta; h), and
// an optional gradient for smooth functions. All built-in functions supply
// ddir analytically; forward differences exist only as a test oracle.
struct DirectionalFunction {
  std::function<double(const VectorXd&)> value;
  std::function<double(const VectorXd&, const VectorXd&)> ddir;
  std::function<VectorXd(const VectorXd&)> gradient;  // may be empty
  int domain_dim = 0;

  bool has_gradient() const { return static_cast<bool>(gradient); }

  // Smooth function: ddir derived from the gradient pairing.
  static DirectionalFunction smooth(std::function<double(const VectorXd&)> value,
                                    std::function<VectorXd(const VectorXd&)> grad, int dim);

  // ||.||^2 / 2
  static DirectionalFunction squared_norm_half(int dim);
  // sum_j (b_j log b_j - b_j), the entropy mirror map on the open positive orthant
  static DirectionalFunction entropy(int dim);
  // ||.||_1 with the exact one-sided rule at zero coordinates
  static DirectionalFunction l1_norm(int dim);
  // <c, .>
  static DirectionalFunction linear(const VectorXd& c);
};

// Forward, backward and symmetrized values of the divergence between two
// points under one radial approximation:
//   forward  = psi(beta) - psi(gamma) - ddir(gamma; beta - gamma)
//   backward = psi(gamma) - psi(beta) - ddir(beta; gamma - beta)
struct GbfValue {
  double forward = 0.0;
  double backward = 0.0;
  double symmetric = 0.0;  // (forward + backward) / 2
};

GbfValue eval_gbf(const DirectionalFunction& psi, const VectorXd& beta, const VectorXd& gamma);

// Independent quadrature oracle for eval_gbf:
//   int_0^1 [ ddir(gamma + t(beta-gamma); beta-gamma) - ddir(gamma; beta-gamma) ] dt
// by composite Simpson; exact on cubics. n_nodes must be >= 3 and is bumped
// to the next odd count when even.
double eval_gbf_via_integral(const DirectionalFunction& psi, const VectorXd& beta,
                             const VectorXd& gamma, int n_nodes = 129);

// theta * psi(alpha) + (1-theta) * psi(beta) - psi(theta*alpha + (1-theta)*beta),
// the convex-combination gap. Requires theta in [0,1].
double eval_comb_gap(const DirectionalFunction& psi, const VectorXd& alpha, const VectorXd& beta,
                     double theta);

// One-sided forward difference (f(beta + eps*h) - f(beta)) / eps. Test oracle
// only; solvers never call this. Suggested eps: 1e-6 * (1 + ||beta||).
double finite_diff_ddir(const std::function<double(const VectorXd&)>& value_oracle,
                        const VectorXd& beta, const VectorXd& h, double eps);

}  // namespace bregman
