#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dvsimc/errors.hpp"

namespace dvsimc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Result of a singular-value based rank decision.
struct RankReport {
  std::size_t numerical_rank = 0;
  std::vector<double> singular_values;  // descending
  double tolerance = 0.0;
  /// sigma_rank / sigma_{rank+1}; +inf when nothing was truncated.
  double gap_ratio = std::numeric_limits<double>::infinity();
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& a) {
  return a.allFinite();
}

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& a, const char* where) {
  if (!a.allFinite()) fail(ErrorKind::invalid_input, std::string(where) + ": non-finite entry in input matrix");
}

inline Eigen::JacobiSVD<Matrix> thin_svd(const Matrix& a) {
  return Eigen::JacobiSVD<Matrix>(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

inline double auto_tolerance(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) * sigma_max * std::numeric_limits<double>::epsilon();
}

}  // namespace detail

/// Moore-Penrose pseudoinverse by truncated SVD. `tol == 0` selects
/// max(rows, cols) * sigma_max * eps.
inline Matrix pinv(const Matrix& a, double tol = 0.0) {
  detail::require_finite(a, "pinv");
  if (tol < 0.0) fail(ErrorKind::invalid_input, "pinv: negative tolerance");
  if (a.size() == 0) return Matrix::Zero(a.cols(), a.rows());
  const auto svd = detail::thin_svd(a);
  const Vector& s = svd.singularValues();
  const double sigma_max = s.size() > 0 ? s(0) : 0.0;
  const double cut = tol > 0.0 ? tol : detail::auto_tolerance(a.rows(), a.cols(), sigma_max);
  Vector s_inv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) s_inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

inline RankReport numerical_rank(const Matrix& a, double tol = 0.0) {
  detail::require_finite(a, "numerical_rank");
  if (tol < 0.0) fail(ErrorKind::invalid_input, "numerical_rank: negative tolerance");
  RankReport report;
  if (a.size() == 0) return report;
  const Vector s = Eigen::JacobiSVD<Matrix>(a).singularValues();
  report.singular_values.assign(s.data(), s.data() + s.size());
  const double sigma_max = s.size() > 0 ? s(0) : 0.0;
  report.tolerance = tol > 0.0 ? tol : detail::auto_tolerance(a.rows(), a.cols(), sigma_max);
  std::size_t r = 0;
  while (r < report.singular_values.size() && report.singular_values[r] > report.tolerance) ++r;
  report.numerical_rank = r;
  if (r == 0) {
    report.gap_ratio = 0.0;
  } else if (r < report.singular_values.size() && report.singular_values[r] > 0.0) {
    report.gap_ratio = report.singular_values[r - 1] / report.singular_values[r];
  }
  return report;
}

/// Position of entry (i, j), i >= j, inside a half-vectorized n x n matrix.
constexpr std::size_t vech_index(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }

constexpr std::size_t vech_size(std::size_t n) { return n * (n + 1) / 2; }

/// Lower-triangular entries, row by row: (1,1), (2,1), (2,2), (3,1), ...
inline Vector vech(const Matrix& a) {
  if (a.rows() != a.cols()) fail(ErrorKind::invalid_input, "vech: matrix is not square");
  detail::require_finite(a, "vech");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    fail(ErrorKind::invalid_input, "vech: matrix is not symmetric");
  const auto n = static_cast<std::size_t>(a.rows());
  Vector out(static_cast<Eigen::Index>(vech_size(n)));
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out(p++) = a(i, j);
  return out;
}

/// vech(v v^T) without materializing the outer product.
inline Vector vech_outer(const Vector& v) {
  Vector out(static_cast<Eigen::Index>(vech_size(static_cast<std::size_t>(v.size()))));
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) out(p++) = v(i) * v(j);
  return out;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.size() == 0) return bottom;
  if (bottom.size() == 0) return top;
  if (top.cols() != bottom.cols()) fail(ErrorKind::invalid_input, "vstack: column counts differ");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

/// Largest root modulus of c0 z^n + c1 z^(n-1) + ... + cn.
inline double polynomial_root_radius(std::span<const double> coeffs) {
  if (coeffs.empty() || coeffs.front() == 0.0)
    fail(ErrorKind::invalid_input, "polynomial_root_radius: leading coefficient is zero");
  for (double c : coeffs)
    if (!std::isfinite(c)) fail(ErrorKind::invalid_input, "polynomial_root_radius: non-finite coefficient");
  const auto n = static_cast<Eigen::Index>(coeffs.size() - 1);
  if (n == 0) return 0.0;
  Matrix companion = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) companion(0, j) = -coeffs[static_cast<std::size_t>(j + 1)] / coeffs[0];
  for (Eigen::Index i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  const Eigen::EigenSolver<Matrix> eig(companion, false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

/// Real root of a x^2 + b x + c = 0 closest to `anchor`.
/// Falls back to the linear solution when `a` is negligible.
inline double solve_quadratic_nearest(double a, double b, double c, double anchor) {
  const double scale = std::max({std::abs(b), std::abs(c), 1.0});
  const double eps = std::numeric_limits<double>::epsilon();
  if (std::abs(a) <= 64.0 * eps * scale) {
    if (std::abs(b) <= 64.0 * eps * std::max(std::abs(c), 1.0)) {
      if (std::abs(c) <= 64.0 * eps) return anchor;
      fail(ErrorKind::numeric, "solve_quadratic_nearest: degenerate equation (a = b = 0, c != 0)");
    }
    return -c / b;
  }
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) {
    if (disc >= -64.0 * eps * (b * b + std::abs(4.0 * a * c))) {
      disc = 0.0;
    } else {
      fail(ErrorKind::numeric, "solve_quadratic_nearest: no real root");
    }
  }
  // Cancellation-free pair of roots.
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  const double r1 = q / a;
  const double r2 = q != 0.0 ? c / q : r1;
  return std::abs(r1 - anchor) <= std::abs(r2 - anchor) ? r1 : r2;
}

}  // namespace dvsimc
