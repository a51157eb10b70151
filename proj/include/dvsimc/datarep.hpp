#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dvsimc/errors.hpp"
#include "dvsimc/format.hpp"
#include "dvsimc/numerics.hpp"
#include "dvsimc/signals.hpp"

namespace dvsimc {

/// Rows of the stacked dictionary: L (M+1)(M+4) / 2.
constexpr std::size_t required_rank(std::size_t M, std::size_t L) { return L * (M + 1) * (M + 4) / 2; }

/// Hankel matrices of one experiment. U_ob, X_ob, Y1_ob exist only for L = 1.
struct DataDictionary {
  std::size_t M = 0;
  std::size_t L = 0;
  std::size_t T = 0;
  Matrix M_ob;
  Matrix M2_ob;
  Matrix Y_ob;
  Matrix U_ob;
  Matrix X_ob;
  Matrix Y1_ob;
  Matrix stacked;

  std::size_t columns() const noexcept { return static_cast<std::size_t>(stacked.cols()); }
  bool has_y1() const noexcept { return Y1_ob.size() > 0; }
};

struct PersistenceReport {
  std::size_t required_rank = 0;
  std::size_t achieved_rank = 0;
  bool is_pe = false;
  double smallest_kept_singular_value = 0.0;
  double tolerance = 0.0;
  double gap_ratio = 0.0;
  double condition_number = 0.0;
  /// Shortest data length that could possibly be persistently exciting.
  std::size_t minimum_T = 0;
};

struct OperatorPair {
  RowVector P1;
  RowVector P2;
};

struct DataRepOptions {
  /// 0 selects the automatic SVD tolerance.
  double rank_tolerance = 0.0;
  /// Compare the pseudoinverse split with the explicit block formulas.
  bool cross_check = true;
  double cross_check_tolerance = 1e-8;
  double agreement_tolerance = 1e-8;
  /// Turns agreement checks into warnings with thresholds widened by noise_level.
  bool noisy = false;
  double noise_level = 0.0;
};

inline DataDictionary build_dictionary(const SignalSequence& u_ob, const SignalSequence& y_ob, std::size_t M,
                                       std::size_t L, std::size_t T) {
  if (L == 0) fail(ErrorKind::invalid_input, "build_dictionary: depth L must be positive");
  if (T < L)
    fail(ErrorKind::window, "build_dictionary: T = " + std::to_string(T) + " is shorter than the depth L = " +
                                std::to_string(L) + "; at least T = " + std::to_string(L + required_rank(M, L) - 1) +
                                " is needed for persistency of excitation");
  const long long t_last = static_cast<long long>(T) - 1;
  u_ob.require_coverage(-static_cast<long long>(M), t_last, "build_dictionary: input");
  y_ob.require_coverage(0, t_last, "build_dictionary: output");

  DataDictionary d;
  d.M = M;
  d.L = L;
  d.T = T;
  const std::size_t N = T - L + 1;
  const LiftedSequence lifted = lift(u_ob, M, 0, T);
  d.M_ob = hankel(lifted.mu, L, N);
  d.M2_ob = hankel(lifted.mu2, L, N);
  d.Y_ob = hankel(y_ob.slice(0, t_last).values(), L, N);
  d.stacked = vstack(d.M_ob, d.M2_ob);
  if (L == 1) {
    d.U_ob = d.M_ob.topRows(1);
    d.X_ob = d.M_ob.bottomRows(static_cast<Eigen::Index>(M));
  }
  return d;
}

/// T taken from the output sequence, which must start at index 0.
inline DataDictionary build_dictionary(const SignalSequence& u_ob, const SignalSequence& y_ob, std::size_t M,
                                       std::size_t L) {
  if (y_ob.start_index() != 0)
    fail(ErrorKind::window, "build_dictionary: output data must start at index 0, starts at " +
                                std::to_string(y_ob.start_index()));
  return build_dictionary(u_ob, y_ob, M, L, y_ob.size());
}

inline PersistenceReport pe_check(const DataDictionary& d, double tol = 0.0) {
  const RankReport r = numerical_rank(d.stacked, tol);
  PersistenceReport p;
  p.required_rank = required_rank(d.M, d.L);
  p.achieved_rank = r.numerical_rank;
  p.is_pe = r.numerical_rank == p.required_rank;
  p.tolerance = r.tolerance;
  p.gap_ratio = r.gap_ratio;
  p.minimum_T = d.L + p.required_rank - 1;
  if (r.numerical_rank > 0) {
    p.smallest_kept_singular_value = r.singular_values[r.numerical_rank - 1];
    p.condition_number = r.singular_values.front() / p.smallest_kept_singular_value;
  }
  return p;
}

inline void write_json(std::ostream& os, const PersistenceReport& p, std::size_t M, std::size_t L, std::size_t T) {
  const auto real = [](double v) { return std::isfinite(v) ? format_real(v) : std::string("null"); };
  os << "{\n"
     << "  \"M\": " << M << ",\n"
     << "  \"L\": " << L << ",\n"
     << "  \"T\": " << T << ",\n"
     << "  \"required_rank\": " << p.required_rank << ",\n"
     << "  \"achieved_rank\": " << p.achieved_rank << ",\n"
     << "  \"is_pe\": " << (p.is_pe ? "true" : "false") << ",\n"
     << "  \"singular_value_floor\": " << real(p.smallest_kept_singular_value) << ",\n"
     << "  \"tolerance\": " << real(p.tolerance) << ",\n"
     << "  \"gap_ratio\": " << real(p.gap_ratio) << ",\n"
     << "  \"condition_number\": " << real(p.condition_number) << ",\n"
     << "  \"minimum_T\": " << p.minimum_T << "\n"
     << "}\n";
}

inline std::string describe_failure(const PersistenceReport& p) {
  std::ostringstream os;
  os << "data are not persistently exciting: rank " << p.achieved_rank << " of required " << p.required_rank;
  return os.str();
}

/// A dictionary together with its PE verdict and the pseudoinverse of the
/// stacked matrix, computed once and shared by all representation queries.
class DataRepresentation {
 public:
  DataRepresentation(DataDictionary d, DataRepOptions opts = {}) : dict_(std::move(d)), opts_(opts) {
    report_ = pe_check(dict_, opts_.rank_tolerance);
    if (report_.is_pe) {
      stacked_pinv_ = pinv(dict_.stacked, opts_.rank_tolerance);
      // Orthonormal basis of the row space (full row rank under PE).
      const Eigen::HouseholderQR<Matrix> qr(dict_.stacked.transpose());
      row_basis_ = qr.householderQ() * Matrix::Identity(dict_.stacked.cols(), dict_.stacked.rows());
    }
  }

  const DataDictionary& dictionary() const noexcept { return dict_; }
  DataDictionary& dictionary() noexcept { return dict_; }
  const PersistenceReport& report() const noexcept { return report_; }
  const DataRepOptions& options() const noexcept { return opts_; }

  const Matrix& stacked_pinv() const {
    require_pe("representation");
    return stacked_pinv_;
  }

  /// (I - S^+ S) w, evaluated as w - Q Q^T w so the error does not scale with cond(S).
  Vector null_projection(const Vector& w) const {
    require_pe("representation");
    return w - row_basis_ * (row_basis_.transpose() * w);
  }

  void require_pe(const std::string& what) const {
    if (!report_.is_pe) fail(ErrorKind::not_persistently_exciting, what + ": " + describe_failure(report_));
  }

  void require_depth_one(const std::string& what) const {
    if (dict_.L != 1) fail(ErrorKind::invalid_input, what + ": needs a depth-one dictionary (L = 1)");
  }

 private:
  DataDictionary dict_;
  DataRepOptions opts_;
  PersistenceReport report_;
  Matrix stacked_pinv_;
  Matrix row_basis_;
};

namespace detail {

inline Vector stack_lifted(const std::vector<Vector>& mu_seq, const std::vector<Vector>& mu2_seq, std::size_t M,
                           std::size_t L) {
  if (mu_seq.size() != L || mu2_seq.size() != L)
    fail(ErrorKind::invalid_input, "trajectory must have exactly L = " + std::to_string(L) + " lifted samples");
  const auto n1 = static_cast<Eigen::Index>(M + 1);
  const auto n2 = static_cast<Eigen::Index>(vech_size(M + 1));
  Vector target(static_cast<Eigen::Index>(L) * (n1 + n2));
  for (std::size_t i = 0; i < L; ++i) {
    if (mu_seq[i].size() != n1 || mu2_seq[i].size() != n2)
      fail(ErrorKind::invalid_input, "trajectory sample has wrong lifted dimension");
    target.segment(static_cast<Eigen::Index>(i) * n1, n1) = mu_seq[i];
    target.segment(static_cast<Eigen::Index>(L) * n1 + static_cast<Eigen::Index>(i) * n2, n2) = mu2_seq[i];
  }
  return target;
}

inline double max_abs(const Matrix& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace detail

struct TrajectoryCoefficients {
  Vector g;
  double residual = 0.0;
  std::vector<std::string> warnings;
};

/// Minimum-norm g with [M_ob; M2_ob] g = [mu; mu2].
inline TrajectoryCoefficients solve_trajectory_coeff(const DataRepresentation& rep, const std::vector<Vector>& mu_seq,
                                                     const std::vector<Vector>& mu2_seq) {
  rep.require_pe("solve_trajectory_coeff");
  const DataDictionary& d = rep.dictionary();
  const Vector target = detail::stack_lifted(mu_seq, mu2_seq, d.M, d.L);
  TrajectoryCoefficients out;
  out.g = rep.stacked_pinv() * target;
  out.residual = detail::max_abs(d.stacked * out.g - target);
  const DataRepOptions& o = rep.options();
  const double limit = o.agreement_tolerance * std::max(1.0, detail::max_abs(target)) + (o.noisy ? o.noise_level : 0.0);
  if (out.residual > limit) {
    const std::string msg = "solve_trajectory_coeff: residual " + format_real(out.residual) + " exceeds " +
                            format_real(limit) + "; the trajectory is not representable by the data";
    if (!o.noisy) fail(ErrorKind::inconsistent, msg);
    out.warnings.push_back(msg);
  }
  return out;
}

struct GeneratedTrajectory {
  std::vector<Vector> mu;
  std::vector<Vector> mu2;
  Vector y;
  Vector g;
};

/// Trajectory of length L driven by v on [-M, L-1]; w picks a point of the
/// null-space family of coefficient vectors and does not affect the result.
inline GeneratedTrajectory generate_trajectory(const DataRepresentation& rep, const SignalSequence& v, const Vector& w) {
  rep.require_pe("generate_trajectory");
  const DataDictionary& d = rep.dictionary();
  if (w.size() != static_cast<Eigen::Index>(d.columns()))
    fail(ErrorKind::invalid_input, "generate_trajectory: w must have T-L+1 = " + std::to_string(d.columns()) + " entries");
  const LiftedSequence l = lift(v, d.M, 0, d.L);
  const Vector nu = detail::stack_lifted(l.mu, l.mu2, d.M, d.L);
  const Matrix& pinv_s = rep.stacked_pinv();
  GeneratedTrajectory out;
  out.g = pinv_s * nu + rep.null_projection(w);
  const Vector mu_all = d.M_ob * out.g;
  const Vector mu2_all = d.M2_ob * out.g;
  const auto n1 = static_cast<Eigen::Index>(d.M + 1);
  const auto n2 = static_cast<Eigen::Index>(vech_size(d.M + 1));
  for (std::size_t i = 0; i < d.L; ++i) {
    out.mu.push_back(mu_all.segment(static_cast<Eigen::Index>(i) * n1, n1));
    out.mu2.push_back(mu2_all.segment(static_cast<Eigen::Index>(i) * n2, n2));
  }
  out.y = d.Y_ob * out.g;
  return out;
}

struct OperatorExtraction {
  OperatorPair ops;
  /// Max deviation between the split path and the explicit formulas; NaN if skipped.
  double cross_check_deviation = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

/// Explicit block formulas for the column split of the stacked pseudoinverse.
/// The inner inverses amplify rounding error, so the arithmetic runs in
/// extended precision and only the result is rounded back to double.
inline std::pair<Matrix, Matrix> explicit_split(const Matrix& m1, const Matrix& m2, double tol = 0.0) {
  using XMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require_finite(m1, "explicit_split");
  detail::require_finite(m2, "explicit_split");
  const auto xpinv = [tol](const XMatrix& a) {
    const Eigen::JacobiSVD<XMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const long double smax = s.size() ? s(0) : 0.0L;
    const long double cut = tol > 0.0 ? static_cast<long double>(tol)
                                      : static_cast<long double>(std::max(a.rows(), a.cols())) * smax *
                                            std::numeric_limits<long double>::epsilon();
    Eigen::Matrix<long double, Eigen::Dynamic, 1> inv = Eigen::Matrix<long double, Eigen::Dynamic, 1>::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > cut) inv(i) = 1.0L / s(i);
    return XMatrix(svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose());
  };
  const XMatrix x1 = m1.cast<long double>();
  const XMatrix x2 = m2.cast<long double>();
  const XMatrix a = xpinv(x1);
  const XMatrix b = xpinv(x2);
  const XMatrix inner1 = XMatrix::Identity(x1.rows(), x1.rows()) - x1 * b * (x2 * a);
  const XMatrix inner2 = XMatrix::Identity(x2.rows(), x2.rows()) - x2 * a * (x1 * b);
  for (const XMatrix* inner : {&inner1, &inner2}) {
    const auto s = Eigen::JacobiSVD<XMatrix>(*inner).singularValues();
    if (s.size() == 0 || !(s(s.size() - 1) > 1e-15L * s(0)))
      fail(ErrorKind::numeric, "explicit operator formulas: inner matrix is singular (degraded data)");
  }
  const XMatrix d1 = (a - b * (x2 * a)) * inner1.fullPivLu().inverse();
  const XMatrix d2 = (b - a * (x1 * b)) * inner2.fullPivLu().inverse();
  return {d1.cast<double>(), d2.cast<double>()};
}

/// P1 = Y_ob D1, P2 = Y_ob D2 where [D1 D2] is the stacked pseudoinverse.
inline OperatorExtraction extract_operators(const DataRepresentation& rep) {
  rep.require_depth_one("extract_operators");
  rep.require_pe("extract_operators");
  const DataDictionary& d = rep.dictionary();
  const DataRepOptions& o = rep.options();
  const auto n1 = static_cast<Eigen::Index>(d.M + 1);
  const auto n2 = static_cast<Eigen::Index>(vech_size(d.M + 1));
  const Matrix& s = rep.stacked_pinv();
  OperatorExtraction out;
  out.ops.P1 = d.Y_ob * s.leftCols(n1);
  out.ops.P2 = d.Y_ob * s.rightCols(n2);
  if (!out.ops.P1.allFinite() || !out.ops.P2.allFinite()) fail(ErrorKind::numeric, "extract_operators: non-finite operator");
  if (o.cross_check) {
    const auto [d1, d2] = explicit_split(d.M_ob, d.M2_ob, o.rank_tolerance);
    const RowVector q1 = d.Y_ob * d1;
    const RowVector q2 = d.Y_ob * d2;
    out.cross_check_deviation = std::max(detail::max_abs(q1 - out.ops.P1), detail::max_abs(q2 - out.ops.P2));
    const double scale = std::max({1.0, detail::max_abs(out.ops.P1), detail::max_abs(out.ops.P2)});
    const double limit = o.cross_check_tolerance * scale;
    if (!(out.cross_check_deviation <= limit)) {
      const std::string msg = "extract_operators: explicit formulas and pseudoinverse split differ by " +
                              format_real(out.cross_check_deviation) + " (limit " + format_real(limit) + ")";
      if (!o.noisy) fail(ErrorKind::numeric, msg);
      out.warnings.push_back(msg);
    }
  }
  return out;
}

inline double predict_output(const OperatorPair& ops, const Vector& mu, const Vector& mu2) {
  if (mu.size() != ops.P1.size() || mu2.size() != ops.P2.size())
    fail(ErrorKind::invalid_input, "predict_output: lifted vectors do not match operator dimensions");
  return ops.P1.dot(mu) + ops.P2.dot(mu2);
}

struct Y1Extraction {
  double discrepancy = 0.0;
  std::vector<std::string> warnings;
};

/// Fills Y1_ob = P1 M_ob and checks it against Y_ob - P2 M2_ob.
inline Y1Extraction extract_y1(DataDictionary& d, const OperatorPair& ops, const DataRepOptions& o = {}) {
  if (d.L != 1) fail(ErrorKind::invalid_input, "extract_y1: needs a depth-one dictionary (L = 1)");
  if (ops.P1.size() != d.M_ob.rows() || ops.P2.size() != d.M2_ob.rows())
    fail(ErrorKind::invalid_input, "extract_y1: operators do not match the dictionary");
  const Matrix first = ops.P1 * d.M_ob;
  const Matrix second = d.Y_ob - ops.P2 * d.M2_ob;
  Y1Extraction out;
  out.discrepancy = detail::max_abs(first - second);
  const double limit = o.agreement_tolerance * std::max(1.0, detail::max_abs(d.Y_ob)) + (o.noisy ? o.noise_level : 0.0);
  if (!(out.discrepancy <= limit)) {
    const std::string msg = "extract_y1: the two forms of y1 differ by " + format_real(out.discrepancy) + " (limit " +
                            format_real(limit) + ")";
    if (!o.noisy) fail(ErrorKind::inconsistent, msg);
    out.warnings.push_back(msg);
  }
  d.Y1_ob = first;
  return out;
}

}  // namespace dvsimc
