#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "bregman/errors.hpp"

namespace bregman {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// min c'x  s.t.  A x = b, x >= 0.
struct StandardFormLP {
  MatrixXd a;
  VectorXd b;
  VectorXd c;
  // A starting feasible basis (column indices, one per row), when the
  // formulation provides one; phase 1 is skipped in that case.
  std::optional<std::vector<int>> initial_basis;
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
  VectorXd x;
  double objective = 0.0;
  LpStatus status = LpStatus::optimal;
  int pivots = 0;
  std::vector<int> basis;  // final basis, row order
};

struct SimplexConfig {
  int max_pivots = 200000;
  double tol = 1e-9;
};

// Two-phase dense primal simplex with Bland's anti-cycling rule (entering:
// lowest-index negative reduced cost; leaving: lowest basis index among the
// minimum ratios). The basic solution is re-solved from the original data at
// the end, so the returned x is accurate to factorization precision.
// Infeasible/unbounded are returned as statuses; only the pivot cap throws.
LpSolution solve_simplex(const StandardFormLP& lp, const SimplexConfig& config = {});

// Variable layout of the capped-l1 SVM subproblem encoding.
struct DcSvmMap {
  int n = 0, p = 0;
  int xi = 0;        // n slack-to-hinge variables
  int zeta = 0;      // p magnitude bounds
  int beta_pos = 0;  // p
  int beta_neg = 0;  // p
  int num_vars = 0;
  VectorXd extract_beta(const VectorXd& x) const;
};

// Encodes  min sum_i xi_i + lambda sum_j zeta_j - lambda sum_j beta_j ind_j
// s.t. xi_i >= 1 - y_i x_i' beta, -zeta_j <= beta_j <= zeta_j, xi, zeta >= 0,
// with beta split into nonnegative parts. The returned LP carries a feasible
// starting basis.
std::pair<StandardFormLP, DcSvmMap> formulate_dc_svm(const MatrixXd& x, const VectorXd& y,
                                                     double lambda,
                                                     const std::vector<bool>& indicator);

}  // namespace bregman
