#include "bregman/checks.hpp"

#include <cmath>
#include <functional>
#include <vector>

#include "bregman/experiments.hpp"
#include "bregman/gbf.hpp"
#include "bregman/losses.hpp"
#include "bregman/lp.hpp"
#include "bregman/rng.hpp"
#include "bregman/thresholds.hpp"
#include "bregman/util.hpp"

namespace bregman {

namespace {

VectorXd random_vec(Rng& rng, int dim, double lo = -2.0, double hi = 2.0) {
  VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

// Random smooth test function: quadratic plus a separable cubic term.
DirectionalFunction random_smooth(Rng& rng, int dim) {
  MatrixXd a = MatrixXd::NullaryExpr(dim, dim, [&](int, int) { return rng.uniform(-1.0, 1.0); });
  a = MatrixXd((a + a.transpose()) / 2.0);
  VectorXd b = random_vec(rng, dim, -1.0, 1.0);
  VectorXd c = random_vec(rng, dim, -0.5, 0.5);
  return DirectionalFunction::smooth(
      [a, b, c](const VectorXd& x) {
        double s = 0.5 * x.dot(a * x) + b.dot(x);
        for (int i = 0; i < x.size(); ++i) s += c[i] * x[i] * x[i] * x[i] / 3.0;
        return s;
      },
      [a, b, c](const VectorXd& x) {
        VectorXd g = a * x + b;
        for (int i = 0; i < x.size(); ++i) g[i] += c[i] * x[i] * x[i];
        return g;
      },
      dim);
}

// Delta of the scalar induced penalty with the one-sided rule at zero.
double penalty_delta(const ThresholdingRule& rule, double lambda, double u, double v) {
  const double pu = induced_penalty(rule, u, lambda);
  if (v == 0.0) return pu - lambda * std::abs(u);
  const double pv = induced_penalty(rule, v, lambda);
  const double slope = rule.inverse(std::abs(v), lambda) - std::abs(v);
  const double sign = v > 0.0 ? 1.0 : -1.0;
  return pu - pv - sign * slope * (u - v);
}

CheckResult gbf_linearity(Rng& rng, int trials) {
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const int dim = 3;
    const DirectionalFunction psi = random_smooth(rng, dim);
    const DirectionalFunction phi = random_smooth(rng, dim);
    const double a = rng.uniform(-2.0, 2.0);
    const double b = rng.uniform(-2.0, 2.0);
    const DirectionalFunction mix = DirectionalFunction::smooth(
        [&psi, &phi, a, b](const VectorXd& x) { return a * psi.value(x) + b * phi.value(x); },
        [&psi, &phi, a, b](const VectorXd& x) {
          return VectorXd(a * psi.gradient(x) + b * phi.gradient(x));
        },
        dim);
    const VectorXd beta = random_vec(rng, dim);
    const VectorXd gamma = random_vec(rng, dim);
    const double lhs = eval_gbf(mix, beta, gamma).forward;
    const double rhs =
        a * eval_gbf(psi, beta, gamma).forward + b * eval_gbf(phi, beta, gamma).forward;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {"gbf_linearity", worst < tol::kLinearity, "max deviation " + format_double(worst)};
}

CheckResult gbf_affine_composition(Rng& rng, int trials) {
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const int pdim = 3, ndim = 4;
    const DirectionalFunction psi = random_smooth(rng, ndim);
    MatrixXd x = MatrixXd::NullaryExpr(ndim, pdim, [&](int, int) { return rng.uniform(-1.0, 1.0); });
    const VectorXd c = random_vec(rng, ndim);
    const DirectionalFunction composed = DirectionalFunction::smooth(
        [&psi, x, c](const VectorXd& b) { return psi.value(x * b + c); },
        [&psi, x, c](const VectorXd& b) { return VectorXd(x.transpose() * psi.gradient(x * b + c)); },
        pdim);
    const VectorXd beta = random_vec(rng, pdim);
    const VectorXd gamma = random_vec(rng, pdim);
    const double lhs = eval_gbf(composed, beta, gamma).forward;
    const double rhs = eval_gbf(psi, x * beta + c, x * gamma + c).forward;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {"gbf_affine_composition", worst < tol::kAffineComposition,
          "max deviation " + format_double(worst)};
}

CheckResult gbf_convexity_sign(Rng& rng, int trials) {
  const DirectionalFunction convex = DirectionalFunction::squared_norm_half(3);
  double min_fwd = 0.0;
  for (int k = 0; k < trials; ++k) {
    min_fwd = std::min(min_fwd, eval_gbf(convex, random_vec(rng, 3), random_vec(rng, 3)).forward);
  }
  const DirectionalFunction concave = DirectionalFunction::smooth(
      [](const VectorXd& b) { return -b.squaredNorm(); },
      [](const VectorXd& b) { return VectorXd(-2.0 * b); }, 3);
  bool saw_negative = false;
  for (int k = 0; k < trials && !saw_negative; ++k) {
    const VectorXd beta = random_vec(rng, 3);
    const VectorXd gamma = random_vec(rng, 3);
    if ((beta - gamma).norm() < 0.1) continue;
    saw_negative = eval_gbf(concave, beta, gamma).forward < 0.0;
  }
  const bool pass = min_fwd >= tol::kConvexFloor && saw_negative;
  return {"gbf_convexity_sign", pass, "min convex forward " + format_double(min_fwd)};
}

CheckResult gbf_idempotence(Rng& rng, int trials) {
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const int dim = 3;
    const DirectionalFunction psi = random_smooth(rng, dim);
    const VectorXd anchor = random_vec(rng, dim);
    // Delta_psi(., anchor) is differentiable with gradient grad(b) - grad(anchor).
    const VectorXd ga = psi.gradient(anchor);
    const double va = psi.value(anchor);
    const DirectionalFunction inner = DirectionalFunction::smooth(
        [&psi, anchor, ga, va](const VectorXd& b) {
          return psi.value(b) - va - ga.dot(b - anchor);
        },
        [&psi, ga](const VectorXd& b) { return VectorXd(psi.gradient(b) - ga); }, dim);
    const VectorXd beta = random_vec(rng, dim);
    const VectorXd gamma = random_vec(rng, dim);
    const double lhs = eval_gbf(inner, beta, gamma).forward;
    const double rhs = eval_gbf(psi, beta, gamma).forward;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {"gbf_strong_idempotence", worst < tol::kIdempotence,
          "max deviation " + format_double(worst)};
}

CheckResult gbf_integral_form(Rng& rng, int trials) {
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const DirectionalFunction psi = random_smooth(rng, 3);
    const VectorXd beta = random_vec(rng, 3);
    const VectorXd gamma = random_vec(rng, 3);
    const double direct = eval_gbf(psi, beta, gamma).forward;
    const double quad = eval_gbf_via_integral(psi, beta, gamma);
    worst = std::max(worst, std::abs(direct - quad));
  }
  return {"gbf_integral_form", worst < tol::kIntegralForm, "max deviation " + format_double(worst)};
}

CheckResult fd_gradient_checks(Rng& rng, int trials) {
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const int n = 12, p = 4;
    MatrixXd x = MatrixXd::NullaryExpr(n, p, [&](int, int) { return rng.uniform(0.1, 1.0); });
    VectorXd yb(n);
    for (int i = 0; i < n; ++i) yb[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    VectorXd yr = random_vec(rng, n, 0.5, 3.0);
    std::vector<LossSpec> specs;
    specs.push_back(LossSpec::squared(x, yr));
    specs.push_back(LossSpec::glm(LossKind::glm_logistic, x, yb));
    specs.push_back(LossSpec::glm(LossKind::glm_poisson, x, VectorXd(yr * 0.5)));
    specs.push_back(LossSpec::itakura_saito(x, yr));
    specs.push_back(LossSpec::tukey(x, yr, 2.0));
    specs.push_back(LossSpec::sigmoidal(x, yb));
    for (const auto& spec : specs) {
      VectorXd beta = random_vec(rng, p, 0.05, 0.6);  // keeps X beta positive for IS
      VectorXd h = random_vec(rng, p, -1.0, 1.0);
      const double analytic = spec.ddir(beta, h);
      const double eps = 1e-6 * (1.0 + beta.norm());
      const double fd =
          finite_diff_ddir([&spec](const VectorXd& b) { return spec.value(b); }, beta, h, eps);
      worst = std::max(worst, std::abs(analytic - fd) / (1.0 + std::abs(analytic)));
    }
  }
  return {"loss_gradient_fd", worst < tol::kGradConsistencyRel,
          "max relative deviation " + format_double(worst)};
}

CheckResult concavity_grid(const ThresholdingRule& rule) {
  const double lambda = 1.0;
  const double ltheta = rule.concavity();
  const int grid = 200;
  double min_cert = std::numeric_limits<double>::infinity();
  double min_loose = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    const double u = -3.0 + 6.0 * i / (grid - 1);
    for (int j = 0; j < grid; ++j) {
      const double v = -3.0 + 6.0 * j / (grid - 1);
      const double dp = penalty_delta(rule, lambda, u, v);
      const double d2 = 0.5 * (u - v) * (u - v);
      min_cert = std::min(min_cert, dp + ltheta * d2);
      min_loose = std::min(min_loose, dp + (ltheta - 0.05) * d2);
    }
  }
  const bool pass = min_cert >= -1e-9 && min_loose < -1e-9;
  return {"concavity_grid_" + rule.name(), pass,
          "min at L " + format_double(min_cert) + ", min at L-0.05 " + format_double(min_loose)};
}

CheckResult quantile_bruteforce(Rng& rng, int trials) {
  for (int k = 0; k < trials; ++k) {
    const int p = 4 + static_cast<int>(rng.uniform() * 9.0);  // up to 12
    const int q = static_cast<int>(rng.uniform() * (p + 1));
    VectorXd alpha = random_vec(rng, p, -3.0, 3.0);
    VectorXd kept;
    try {
      kept = quantile_threshold(alpha, q);
    } catch (const TieError&) {
      continue;
    }
    const double got = 0.5 * (kept - alpha).squaredNorm();
    // enumerate all supports of size <= q
    double best = alpha.squaredNorm() * 0.5;
    for (std::uint32_t mask = 0; mask < (1u << p); ++mask) {
      if (__builtin_popcount(mask) > q) continue;
      double val = 0.0;
      for (int j = 0; j < p; ++j) {
        if (!(mask & (1u << j))) val += 0.5 * alpha[j] * alpha[j];
      }
      best = std::min(best, val);
    }
    if (std::abs(got - best) > 1e-10) {
      return {"quantile_bruteforce", false,
              "projection mismatch " + format_double(got - best) + " at trial " +
                  std::to_string(k)};
    }
  }
  return {"quantile_bruteforce", true, std::to_string(trials) + " instances"};
}

CheckResult simplex_vs_enumeration(Rng& rng, int instances) {
  const int m = 6, nv = 10;
  for (int k = 0; k < instances; ++k) {
    StandardFormLP lp;
    lp.a = MatrixXd::NullaryExpr(m, nv, [&](int, int) { return rng.uniform(-1.0, 1.0); });
    VectorXd x0(nv);
    for (int j = 0; j < nv; ++j) x0[j] = rng.uniform(0.1, 1.0);
    lp.b = lp.a * x0;
    lp.c = random_vec(rng, nv, 0.0, 1.0);  // c >= 0 keeps the LP bounded
    const LpSolution sol = solve_simplex(lp);
    if (sol.status != LpStatus::optimal) {
      return {"simplex_vs_enumeration", false, "unexpected status at instance " + std::to_string(k)};
    }
    // enumerate basic feasible solutions
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> comb(m);
    std::function<void(int, int)> rec = [&](int start, int depth) {
      if (depth == m) {
        MatrixXd basis(m, m);
        for (int i = 0; i < m; ++i) basis.col(i) = lp.a.col(comb[i]);
        Eigen::FullPivLU<MatrixXd> lu(basis);
        if (!lu.isInvertible()) return;
        const VectorXd xb = lu.solve(lp.b);
        if ((xb.array() < -1e-9).any()) return;
        double val = 0.0;
        for (int i = 0; i < m; ++i) val += lp.c[comb[i]] * xb[i];
        best = std::min(best, val);
        return;
      }
      for (int j = start; j < nv; ++j) {
        comb[depth] = j;
        rec(j + 1, depth + 1);
      }
    };
    rec(0, 0);
    if (std::abs(sol.objective - best) > 1e-8 * (1.0 + std::abs(best))) {
      return {"simplex_vs_enumeration", false,
              "objective gap " + format_double(sol.objective - best) + " at instance " +
                  std::to_string(k)};
    }
  }
  return {"simplex_vs_enumeration", true, std::to_string(instances) + " instances"};
}

CheckResult csv_determinism(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.experiment = ExperimentKind::is_mirror;
  cfg.n = 20;
  cfg.p = 20;
  cfg.seed = seed;
  cfg.replications = 3;
  cfg.iters = 40;
  cfg.threads = 2;
  const ExperimentResult a = run_is_mirror(cfg);
  const ExperimentResult b = run_is_mirror(cfg);
  bool same = a.tables.size() == b.tables.size();
  for (std::size_t i = 0; same && i < a.tables.size(); ++i) {
    same = a.tables[i].first == b.tables[i].first &&
           a.tables[i].second.to_string() == b.tables[i].second.to_string();
  }
  return {"csv_determinism", same, same ? "byte-identical" : "outputs differ"};
}

}  // namespace

std::vector<CheckResult> check_invariants(bool quick, std::uint64_t seed) {
  Rng rng(seed);
  const int trials = quick ? 20 : 100;
  std::vector<CheckResult> out;
  out.push_back(gbf_linearity(rng, trials));
  out.push_back(gbf_affine_composition(rng, trials));
  out.push_back(gbf_convexity_sign(rng, trials));
  out.push_back(gbf_idempotence(rng, trials));
  out.push_back(gbf_integral_form(rng, trials));
  out.push_back(fd_gradient_checks(rng, quick ? 3 : 10));
  out.push_back(concavity_grid(ThresholdingRule::soft()));
  out.push_back(concavity_grid(ThresholdingRule::hard()));
  out.push_back(concavity_grid(ThresholdingRule::scad(3.7)));
  out.push_back(concavity_grid(ThresholdingRule::mcp(3.0)));
  out.push_back(quantile_bruteforce(rng, quick ? 30 : 200));
  out.push_back(simplex_vs_enumeration(rng, quick ? 20 : 100));
  out.push_back(csv_determinism(seed));
  return out;
}

}  // namespace bregman
