#include "bregman/gbf.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace bregman {

namespace {

std::string describe_point(const VectorXd& v) {
  std::ostringstream os;
  os << "[";
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < std::min(n, 8); ++i) {
    if (i) os << ", ";
    os << v[i];
  }
  if (n > 8) os << ", ...";
  os << "]";
  return os.str();
}

double checked(double v, const char* what, const VectorXd& at) {
  if (!std::isfinite(v)) {
    throw NonFiniteEvaluation(std::string("non-finite ") + what + " at " + describe_point(at));
  }
  return v;
}

}  // namespace

DirectionalFunction DirectionalFunction::smooth(std::function<double(const VectorXd&)> value,
                                                std::function<VectorXd(const VectorXd&)> grad,
                                                int dim) {
  DirectionalFunction f;
  f.value = std::move(value);
  f.gradient = std::move(grad);
  f.ddir = [g = f.gradient](const VectorXd& beta, const VectorXd& h) { return g(beta).dot(h); };
  f.domain_dim = dim;
  return f;
}

DirectionalFunction DirectionalFunction::squared_norm_half(int dim) {
  return smooth([](const VectorXd& b) { return 0.5 * b.squaredNorm(); },
                [](const VectorXd& b) { return b; }, dim);
}

DirectionalFunction DirectionalFunction::entropy(int dim) {
  return smooth(
      [](const VectorXd& b) {
        double s = 0.0;
        for (int i = 0; i < b.size(); ++i) s += b[i] * std::log(b[i]) - b[i];
        return s;
      },
      [](const VectorXd& b) {
        VectorXd g(b.size());
        for (int i = 0; i < b.size(); ++i) g[i] = std::log(b[i]);
        return g;
      },
      dim);
}

DirectionalFunction DirectionalFunction::l1_norm(int dim) {
  DirectionalFunction f;
  f.value = [](const VectorXd& b) { return b.lpNorm<1>(); };
  f.ddir = [](const VectorXd& b, const VectorXd& h) {
    double s = 0.0;
    for (int i = 0; i < b.size(); ++i) {
      if (b[i] > 0.0)
        s += h[i];
      else if (b[i] < 0.0)
        s -= h[i];
      else
        s += std::abs(h[i]);
    }
    return s;
  };
  f.domain_dim = dim;
  return f;
}

DirectionalFunction DirectionalFunction::linear(const VectorXd& c) {
  return smooth([c](const VectorXd& b) { return c.dot(b); }, [c](const VectorXd&) { return c; },
                static_cast<int>(c.size()));
}

GbfValue eval_gbf(const DirectionalFunction& psi, const VectorXd& beta, const VectorXd& gamma) {
  const double v_beta = checked(psi.value(beta), "value", beta);
  const double v_gamma = checked(psi.value(gamma), "value", gamma);
  const double d_gamma = checked(psi.ddir(gamma, beta - gamma), "directional derivative", gamma);
  const double d_beta = checked(psi.ddir(beta, gamma - beta), "directional derivative", beta);
  GbfValue out;
  out.forward = v_beta - v_gamma - d_gamma;
  out.backward = v_gamma - v_beta - d_beta;
  out.symmetric = 0.5 * (out.forward + out.backward);
  return out;
}

double eval_gbf_via_integral(const DirectionalFunction& psi, const VectorXd& beta,
                             const VectorXd& gamma, int n_nodes) {
  if (n_nodes < 3) throw DomainError("eval_gbf_via_integral: n_nodes must be >= 3");
  if (n_nodes % 2 == 0) ++n_nodes;
  const VectorXd dir = beta - gamma;
  const double base = checked(psi.ddir(gamma, dir), "directional derivative", gamma);
  const int intervals = n_nodes - 1;
  const double h = 1.0 / intervals;
  double sum = 0.0;
  for (int i = 0; i < n_nodes; ++i) {
    const double t = i * h;
    const VectorXd point = gamma + t * dir;
    const double fi = checked(psi.ddir(point, dir), "directional derivative", point) - base;
    double w;
    if (i == 0 || i == intervals)
      w = 1.0;
    else if (i % 2 == 1)
      w = 4.0;
    else
      w = 2.0;
    sum += w * fi;
  }
  return sum * h / 3.0;
}

double eval_comb_gap(const DirectionalFunction& psi, const VectorXd& alpha, const VectorXd& beta,
                     double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("eval_comb_gap: theta must lie in [0,1]");
  const double va = checked(psi.value(alpha), "value", alpha);
  const double vb = checked(psi.value(beta), "value", beta);
  const VectorXd mix = theta * alpha + (1.0 - theta) * beta;
  const double vm = checked(psi.value(mix), "value", mix);
  return theta * va + (1.0 - theta) * vb - vm;
}

double finite_diff_ddir(const std::function<double(const VectorXd&)>& value_oracle,
                        const VectorXd& beta, const VectorXd& h, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_diff_ddir: eps must be positive");
  const VectorXd shifted = beta + eps * h;
  const double f1 = checked(value_oracle(shifted), "value", shifted);
  const double f0 = checked(value_oracle(beta), "value", beta);
  return (f1 - f0) / eps;
}

}  // namespace bregman
