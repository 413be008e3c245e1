#include "bregman/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bregman {

double spectral_norm(const MatrixXd& x, int max_iter, double tol) {
  if (x.rows() == 0 || x.cols() == 0) return 0.0;
  VectorXd v = VectorXd::Ones(x.cols());
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    VectorXd w = x.transpose() * (x * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = std::sqrt(norm);
    if (std::abs(next - est) <= tol * std::max(1.0, next)) {
      return next;
    }
    est = next;
    v = std::move(w);
  }
  return est;
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (v[mid - 1] + hi);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace bregman
