#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace bregman {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Largest singular value via power iteration on X^T X (100 steps, tol 1e-10).
// Deterministic: starts from the all-ones vector.
double spectral_norm(const MatrixXd& x, int max_iter = 100, double tol = 1e-10);

// Median of a copy of v (average of the two middle order statistics for even n).
double median(std::vector<double> v);

// Decimal formatting with 17 significant digits; lossless for doubles.
std::string format_double(double v);

}  // namespace bregman
