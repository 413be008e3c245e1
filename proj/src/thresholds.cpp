#include "bregman/thresholds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace bregman {

namespace {

double sgn(double t) { return (t > 0.0) - (t < 0.0); }

double soft_apply(double t, double lambda) {
  const double a = std::abs(t);
  return a > lambda ? sgn(t) * (a - lambda) : 0.0;
}

double hard_apply(double t, double lambda) { return std::abs(t) > lambda ? t : 0.0; }

double scad_apply(double t, double lambda, double a) {
  const double u = std::abs(t);
  if (u <= 2.0 * lambda) return soft_apply(t, lambda);
  if (u <= a * lambda) return sgn(t) * ((a - 1.0) * u - a * lambda) / (a - 2.0);
  return t;
}

double mcp_apply(double t, double lambda, double gamma) {
  const double u = std::abs(t);
  if (u > gamma * lambda) return t;
  if (u <= lambda) return 0.0;
  return sgn(t) * (u - lambda) * gamma / (gamma - 1.0);
}

}  // namespace

ThresholdingRule ThresholdingRule::soft() { return ThresholdingRule(Kind::soft, "soft", 0.0); }

ThresholdingRule ThresholdingRule::hard() { return ThresholdingRule(Kind::hard, "hard", 0.0); }

ThresholdingRule ThresholdingRule::scad(double a) {
  if (!(a > 2.0)) throw DomainError("scad: parameter must satisfy a > 2");
  return ThresholdingRule(Kind::scad, "scad", a);
}

ThresholdingRule ThresholdingRule::mcp(double gamma) {
  if (!(gamma > 1.0)) throw DomainError("mcp: parameter must satisfy gamma > 1");
  return ThresholdingRule(Kind::mcp, "mcp", gamma);
}

ThresholdingRule ThresholdingRule::custom(std::string name,
                                          std::function<double(double, double)> apply) {
  ThresholdingRule r(Kind::custom, std::move(name), 0.0);
  r.custom_apply_ = std::move(apply);
  return r;
}

double ThresholdingRule::apply(double t, double lambda) const {
  if (lambda < 0.0) throw DomainError("apply_threshold: lambda must be nonnegative");
  switch (kind_) {
    case Kind::soft: return soft_apply(t, lambda);
    case Kind::hard: return hard_apply(t, lambda);
    case Kind::scad: return scad_apply(t, lambda, param_);
    case Kind::mcp: return mcp_apply(t, lambda, param_);
    case Kind::custom: return custom_apply_(t, lambda);
  }
  return 0.0;
}

double ThresholdingRule::inverse(double u, double lambda) const {
  if (u < 0.0) throw DomainError("threshold_inverse: u must be nonnegative");
  if (lambda < 0.0) throw DomainError("threshold_inverse: lambda must be nonnegative");
  if (u == 0.0) return lambda;  // sup of the zero set [0, lambda)
  switch (kind_) {
    case Kind::soft: return u + lambda;
    case Kind::hard: return std::max(u, lambda);
    case Kind::scad: {
      const double a = param_;
      if (u <= lambda) return u + lambda;
      if (u <= a * lambda) return ((a - 2.0) * u + a * lambda) / (a - 1.0);
      return u;
    }
    case Kind::mcp: {
      const double g = param_;
      if (u <= g * lambda) return lambda + u * (g - 1.0) / g;
      return u;
    }
    case Kind::custom: break;
  }
  // Monotone bisection on {t : Theta(t) <= u}. Theta(t) <= t means the set
  // contains [0, u]; grow the upper end until Theta exceeds u.
  double lo = u;
  double hi = u + 10.0 * lambda + 1.0;
  if (custom_apply_(hi, lambda) <= u) {
    throw InverseBracketError("threshold_inverse: no bracket within [0, u + 10*lambda + 1]");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (custom_apply_(mid, lambda) <= u)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double ThresholdingRule::concavity(double lambda) const {
  switch (kind_) {
    case Kind::soft: return 0.0;
    case Kind::hard: return 1.0;
    case Kind::scad: return 1.0 / (param_ - 1.0);
    case Kind::mcp: return 1.0 / param_;
    case Kind::custom: break;
  }
  // Grid estimate of 1 - inf d Theta^{-1}/du over (0, 20 lambda]; approximate,
  // the exact essential infimum is unavailable without symbolic access.
  const int n = 10000;
  const double hi = 20.0 * lambda;
  const double h = hi / n;
  double inf_slope = std::numeric_limits<double>::infinity();
  double prev = inverse(1e-12, lambda);
  for (int i = 1; i <= n; ++i) {
    const double cur = inverse(i * h, lambda);
    inf_slope = std::min(inf_slope, (cur - prev) / h);
    prev = cur;
  }
  return 1.0 - inf_slope;
}

double hard_penalty(double t, double lambda) {
  const double a = std::abs(t);
  if (a >= lambda) return 0.5 * lambda * lambda;
  return -0.5 * t * t + lambda * a;
}

double hard_penalty(const VectorXd& t, double lambda) {
  double s = 0.0;
  for (int i = 0; i < t.size(); ++i) s += hard_penalty(t[i], lambda);
  return s;
}

namespace {

// Adaptive Simpson on f over [a,b] to absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace

double induced_penalty(const ThresholdingRule& rule, double t, double lambda) {
  if (lambda < 0.0) throw DomainError("induced_penalty: lambda must be nonnegative");
  const double x = std::abs(t);
  switch (rule.kind()) {
    case ThresholdingRule::Kind::soft: return lambda * x;
    case ThresholdingRule::Kind::hard: return hard_penalty(t, lambda);
    case ThresholdingRule::Kind::scad: {
      const double a = rule.parameter();
      if (x <= lambda) return lambda * x;
      if (x <= a * lambda) return (2.0 * a * lambda * x - x * x - lambda * lambda) / (2.0 * (a - 1.0));
      return lambda * lambda * (a + 1.0) / 2.0;
    }
    case ThresholdingRule::Kind::mcp: {
      const double g = rule.parameter();
      if (x <= g * lambda) return lambda * x - x * x / (2.0 * g);
      return 0.5 * g * lambda * lambda;
    }
    case ThresholdingRule::Kind::custom: break;
  }
  if (x == 0.0) return 0.0;
  auto integrand = [&](double u) { return rule.inverse(u, lambda) - u; };
  const double fa = integrand(0.0);
  const double fb = integrand(x);
  const double fm = integrand(0.5 * x);
  const double whole = x / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(integrand, 0.0, x, fa, fm, fb, whole, 1e-10, 40);
}

VectorXd quantile_threshold(const VectorXd& alpha, int q) {
  const int p = static_cast<int>(alpha.size());
  if (q < 0 || q > p) throw DomainError("quantile_threshold: q must lie in [0, p]");
  if (q == 0) return VectorXd::Zero(p);
  if (q == p) return alpha;
  std::vector<int> idx(p);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) {
    const double ai = std::abs(alpha[i]);
    const double aj = std::abs(alpha[j]);
    if (ai != aj) return ai > aj;
    return i < j;
  });
  const double cut_in = std::abs(alpha[idx[q - 1]]);
  const double cut_out = std::abs(alpha[idx[q]]);
  if (cut_in - cut_out <= 1e-12) {
    throw TieError("quantile_threshold: tie at rank " + std::to_string(q) + " between indices " +
                       std::to_string(idx[q - 1]) + " and " + std::to_string(idx[q]),
                   idx[q - 1], idx[q]);
  }
  VectorXd out = VectorXd::Zero(p);
  for (int k = 0; k < q; ++k) out[idx[k]] = alpha[idx[k]];
  return out;
}

}  // namespace bregman
