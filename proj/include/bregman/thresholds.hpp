#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "bregman/errors.hpp"

namespace bregman {

using Eigen::VectorXd;

// Scalar thresholding rule Theta(t; lambda): odd, nondecreasing, shrinking
// (0 <= Theta(t) <= t for t >= 0), and identically zero on [0, lambda).
// Couples to its induced penalty P_Theta(t) = int_0^|t| (Theta^{-1}(u) - u) du
// and the concavity number L_Theta = 1 - ess inf d Theta^{-1}/du.
class ThresholdingRule {
 public:
  enum class Kind { soft, hard, scad, mcp, custom };

  static ThresholdingRule soft();
  static ThresholdingRule hard();
  static ThresholdingRule scad(double a);    // requires a > 2
  static ThresholdingRule mcp(double gamma); // requires gamma > 1

  // User-supplied rule. inverse and concavity fall back to bisection and a
  // grid estimate respectively; concavity_is_estimate() reports the latter.
  static ThresholdingRule custom(std::string name,
                                 std::function<double(double, double)> apply);

  // Theta(t; lambda). Throws DomainError when lambda < 0.
  double apply(double t, double lambda) const;

  // Theta^{-1}(u; lambda) = sup{ t : Theta(t; lambda) <= u } for u >= 0.
  // Returns lambda at u = 0 (the sup of the zero set). Closed form for the
  // built-ins; bisection to 1e-12 over [0, u + 10 lambda + 1] otherwise.
  double inverse(double u, double lambda) const;

  // L_Theta. Exact for the built-ins (soft 0, hard 1, scad 1/(a-1),
  // mcp 1/gamma); a 10^4-node grid estimate over u in (0, 20 lambda] for
  // custom rules, evaluated at lambda = 1 by default.
  double concavity(double lambda = 1.0) const;
  bool concavity_is_estimate() const { return kind_ == Kind::custom; }

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double parameter() const { return param_; }

 private:
  ThresholdingRule(Kind kind, std::string name, double param)
      : kind_(kind), name_(std::move(name)), param_(param) {}

  Kind kind_;
  std::string name_;
  double param_ = 0.0;  // scad a / mcp gamma
  std::function<double(double, double)> custom_apply_;
};

// Convenience wrappers matching the scalar operations.
inline double apply_threshold(const ThresholdingRule& rule, double t, double lambda) {
  return rule.apply(t, lambda);
}
inline double threshold_inverse(const ThresholdingRule& rule, double u, double lambda) {
  return rule.inverse(u, lambda);
}
inline double concavity_number(const ThresholdingRule& rule) { return rule.concavity(); }

// P_H(t; lambda) = (-t^2/2 + lambda |t|) 1_{|t| < lambda} + (lambda^2/2) 1_{|t| >= lambda}.
double hard_penalty(double t, double lambda);
// Elementwise with summation.
double hard_penalty(const VectorXd& t, double lambda);

// P_Theta(t; lambda). Closed form for soft (lambda |t|), hard (P_H), SCAD and
// MCP; adaptive quadrature of Theta^{-1}(u) - u to 1e-10 for custom rules.
double induced_penalty(const ThresholdingRule& rule, double t, double lambda);

// Keeps the q largest-magnitude coordinates of alpha, zeroes the rest.
// Throws TieError when |alpha_(q)| and |alpha_(q+1)| agree within 1e-12.
VectorXd quantile_threshold(const VectorXd& alpha, int q);

}  // namespace bregman
