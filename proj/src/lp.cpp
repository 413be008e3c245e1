#include "bregman/lp.hpp"

#include <cmath>
#include <limits>

namespace bregman {

namespace {

// Row-major tableau [A | b] with a separate cost row; basis_[i] is the column
// basic in row i.
class Tableau {
 public:
  Tableau(const MatrixXd& a, const VectorXd& b) : m_(static_cast<int>(a.rows())) {
    t_.resize(m_, a.cols() + 1);
    t_.leftCols(a.cols()) = a;
    t_.col(a.cols()) = b;
    // Normalize to b >= 0 for the ratio test.
    for (int i = 0; i < m_; ++i) {
      if (t_(i, a.cols()) < 0.0) t_.row(i) *= -1.0;
    }
  }

  int rows() const { return m_; }
  int cols() const { return static_cast<int>(t_.cols()) - 1; }
  double rhs(int i) const { return t_(i, cols()); }

  void append_identity() {
    const int old = cols();
    Eigen::MatrixXd grown(m_, old + m_ + 1);
    grown.leftCols(old) = t_.leftCols(old);
    grown.middleCols(old, m_) = MatrixXd::Identity(m_, m_);
    grown.col(old + m_) = t_.col(old);
    t_ = std::move(grown);
  }

  void pivot(int row, int col) {
    t_.row(row) /= t_(row, col);
    for (int i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double factor = t_(i, col);
      if (factor != 0.0) t_.row(i).noalias() -= factor * t_.row(row);
    }
    basis_[row] = col;
  }

  std::vector<int>& basis() { return basis_; }
  const std::vector<int>& basis() const { return basis_; }
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& data() const {
    return t_;
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& data() { return t_; }

 private:
  int m_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> t_;
  std::vector<int> basis_;
};

// Reduced costs for the current basis: c - c_B' B^{-1} A, computed from the
// tableau rows (the tableau already holds B^{-1} A).
VectorXd reduced_costs(const Tableau& t, const VectorXd& cost, int usable_cols) {
  VectorXd red = cost.head(usable_cols);
  for (int i = 0; i < t.rows(); ++i) {
    const double cb = cost[t.basis()[i]];
    if (cb != 0.0) red.noalias() -= cb * t.data().row(i).head(usable_cols).transpose();
  }
  return red;
}

// Bland: entering = smallest index with reduced cost < -tol; leaving = among
// rows attaining the minimum ratio, the one whose basic variable has the
// smallest index. Returns true while pivoting, false at optimality.
// Throws on the pivot cap; unbounded reported through *unbounded.
bool bland_step(Tableau& t, const VectorXd& cost, int usable_cols, double tol, int* pivots,
                int max_pivots, bool* unbounded) {
  const VectorXd red = reduced_costs(t, cost, usable_cols);
  int enter = -1;
  for (int j = 0; j < usable_cols; ++j) {
    if (red[j] < -tol) {
      enter = j;
      break;
    }
  }
  if (enter < 0) return false;
  int leave = -1;
  double best_ratio = std::numeric_limits<double>::infinity();
  for (int i = 0; i < t.rows(); ++i) {
    const double aij = t.data()(i, enter);
    if (aij > tol) {
      const double ratio = t.rhs(i) / aij;
      if (ratio < best_ratio - 1e-15 ||
          (std::abs(ratio - best_ratio) <= 1e-15 &&
           (leave < 0 || t.basis()[i] < t.basis()[leave]))) {
        best_ratio = ratio;
        leave = i;
      }
    }
  }
  if (leave < 0) {
    *unbounded = true;
    return false;
  }
  if (++*pivots > max_pivots) throw PivotLimitError("solve_simplex: pivot limit exceeded");
  t.pivot(leave, enter);
  return true;
}

}  // namespace

LpSolution solve_simplex(const StandardFormLP& lp, const SimplexConfig& config) {
  const int m = static_cast<int>(lp.a.rows());
  const int n = static_cast<int>(lp.a.cols());
  if (lp.b.size() != m || lp.c.size() != n) throw DomainError("solve_simplex: dimension mismatch");
  if (!lp.a.allFinite() || !lp.b.allFinite() || !lp.c.allFinite()) {
    throw DomainError("solve_simplex: data must be finite");
  }

  LpSolution sol;
  sol.pivots = 0;
  Tableau t(lp.a, lp.b);
  bool unbounded = false;

  if (lp.initial_basis) {
    const std::vector<int>& wanted = *lp.initial_basis;
    if (static_cast<int>(wanted.size()) != m) {
      throw DomainError("solve_simplex: initial basis size must equal the row count");
    }
    t.basis().assign(m, -1);
    // Gaussian reduction to the canonical tableau of the requested basis.
    for (int i = 0; i < m; ++i) {
      const int col = wanted[i];
      int row = -1;
      for (int k = i; k < m; ++k) {
        if (std::abs(t.data()(k, col)) > config.tol) {
          row = k;
          break;
        }
      }
      if (row < 0) throw DomainError("solve_simplex: initial basis is singular");
      if (row != i) t.data().row(row).swap(t.data().row(i));
      t.pivot(i, col);
    }
    for (int i = 0; i < m; ++i) {
      if (t.rhs(i) < -config.tol) {
        throw DomainError("solve_simplex: initial basis is infeasible");
      }
    }
  } else {
    // Phase 1: artificial basis, minimize the artificial sum.
    t.append_identity();
    t.basis().resize(m);
    for (int i = 0; i < m; ++i) t.basis()[i] = n + i;
    VectorXd phase1_cost = VectorXd::Zero(n + m);
    phase1_cost.tail(m).setOnes();
    while (bland_step(t, phase1_cost, n + m, config.tol, &sol.pivots, config.max_pivots,
                      &unbounded)) {
    }
    double art_sum = 0.0;
    for (int i = 0; i < m; ++i) {
      if (t.basis()[i] >= n) art_sum += t.rhs(i);
    }
    if (art_sum > 1e-7) {
      sol.status = LpStatus::infeasible;
      sol.x = VectorXd::Zero(n);
      return sol;
    }
    // Drive remaining zero-level artificials out of the basis where possible.
    for (int i = 0; i < m; ++i) {
      if (t.basis()[i] < n) continue;
      int col = -1;
      for (int j = 0; j < n; ++j) {
        if (std::abs(t.data()(i, j)) > config.tol) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        ++sol.pivots;
        t.pivot(i, col);
      }
      // A row with no eligible column is redundant; its artificial stays
      // basic at level zero and never re-enters phase 2 (cost column n..).
    }
  }

  // Phase 2 over the structural columns only.
  const int usable = static_cast<int>(t.cols());
  VectorXd cost = VectorXd::Zero(usable);
  cost.head(n) = lp.c;
  while (bland_step(t, cost, n, config.tol, &sol.pivots, config.max_pivots, &unbounded)) {
  }
  if (unbounded) {
    sol.status = LpStatus::unbounded;
    sol.x = VectorXd::Zero(n);
    return sol;
  }

  sol.basis = t.basis();
  // Re-solve the basic system from the original data; this discards the
  // rounding accumulated over the pivot sequence.
  std::vector<int> structural;
  for (int i = 0; i < m; ++i) {
    if (sol.basis[i] < n) structural.push_back(sol.basis[i]);
  }
  sol.x = VectorXd::Zero(n);
  if (!structural.empty()) {
    MatrixXd ab(m, structural.size());
    for (std::size_t k = 0; k < structural.size(); ++k) ab.col(k) = lp.a.col(structural[k]);
    const VectorXd xb = ab.colPivHouseholderQr().solve(lp.b);
    for (std::size_t k = 0; k < structural.size(); ++k) sol.x[structural[k]] = xb[k];
  }
  sol.objective = lp.c.dot(sol.x);
  sol.status = LpStatus::optimal;
  return sol;
}

VectorXd DcSvmMap::extract_beta(const VectorXd& x) const {
  VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta[j] = x[beta_pos + j] - x[beta_neg + j];
  return beta;
}

std::pair<StandardFormLP, DcSvmMap> formulate_dc_svm(const MatrixXd& x, const VectorXd& y,
                                                     double lambda,
                                                     const std::vector<bool>& indicator) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (y.size() != n || static_cast<int>(indicator.size()) != p) {
    throw DomainError("formulate_dc_svm: dimension mismatch");
  }
  if (lambda < 0.0) throw DomainError("formulate_dc_svm: lambda must be nonnegative");

  DcSvmMap map;
  map.n = n;
  map.p = p;
  map.xi = 0;
  map.zeta = n;
  map.beta_pos = n + p;
  map.beta_neg = n + 2 * p;
  const int surplus = n + 3 * p;   // hinge rows
  const int slack_hi = surplus + n;  // beta_j <= zeta_j rows
  const int slack_lo = slack_hi + p; // -zeta_j <= beta_j rows
  map.num_vars = slack_lo + p;

  const int m = n + 2 * p;
  StandardFormLP lp;
  lp.a = MatrixXd::Zero(m, map.num_vars);
  lp.b = VectorXd::Zero(m);
  lp.c = VectorXd::Zero(map.num_vars);

  // xi_i + y_i x_i' (b+ - b-) - s_i = 1
  for (int i = 0; i < n; ++i) {
    lp.a(i, map.xi + i) = 1.0;
    for (int j = 0; j < p; ++j) {
      const double v = y[i] * x(i, j);
      lp.a(i, map.beta_pos + j) = v;
      lp.a(i, map.beta_neg + j) = -v;
    }
    lp.a(i, surplus + i) = -1.0;
    lp.b[i] = 1.0;
  }
  // zeta_j - (b+ - b-)_j - u_j = 0  and  zeta_j + (b+ - b-)_j - v_j = 0
  for (int j = 0; j < p; ++j) {
    const int r1 = n + j;
    lp.a(r1, map.zeta + j) = 1.0;
    lp.a(r1, map.beta_pos + j) = -1.0;
    lp.a(r1, map.beta_neg + j) = 1.0;
    lp.a(r1, slack_hi + j) = -1.0;
    const int r2 = n + p + j;
    lp.a(r2, map.zeta + j) = 1.0;
    lp.a(r2, map.beta_pos + j) = 1.0;
    lp.a(r2, map.beta_neg + j) = -1.0;
    lp.a(r2, slack_lo + j) = -1.0;
  }
  for (int i = 0; i < n; ++i) lp.c[map.xi + i] = 1.0;
  for (int j = 0; j < p; ++j) {
    lp.c[map.zeta + j] = lambda;
    if (indicator[j]) {
      lp.c[map.beta_pos + j] = -lambda;
      lp.c[map.beta_neg + j] = lambda;
    }
  }

  // xi basic on the hinge rows; u, v basic (at zero) on the bound rows.
  std::vector<int> basis(m);
  for (int i = 0; i < n; ++i) basis[i] = map.xi + i;
  for (int j = 0; j < p; ++j) {
    basis[n + j] = slack_hi + j;
    basis[n + p + j] = slack_lo + j;
  }
  lp.initial_basis = std::move(basis);
  return {std::move(lp), map};
}

}  // namespace bregman
