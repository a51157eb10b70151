#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dvsimc/errors.hpp"
#include "dvsimc/keyvalue.hpp"
#include "dvsimc/numerics.hpp"
#include "dvsimc/signals.hpp"

namespace dvsimc {

/// Second-order Volterra model y = theta1' mu + theta2' mu2.
/// theta2 is vech-ordered with off-diagonal kernel entries already doubled.
struct VolterraParams {
  std::size_t M = 0;
  Vector theta1;
  Vector theta2;

  VolterraParams() = default;
  VolterraParams(std::size_t memory, Vector t1, Vector t2) : M(memory), theta1(std::move(t1)), theta2(std::move(t2)) {
    validate();
  }

  void validate() const {
    if (theta1.size() != static_cast<Eigen::Index>(M + 1))
      fail(ErrorKind::invalid_input, "VolterraParams: theta1 must have M+1 = " + std::to_string(M + 1) + " entries");
    if (theta2.size() != static_cast<Eigen::Index>(vech_size(M + 1)))
      fail(ErrorKind::invalid_input,
           "VolterraParams: theta2 must have (M+1)(M+2)/2 = " + std::to_string(vech_size(M + 1)) + " entries");
    if (!theta1.allFinite() || !theta2.allFinite()) fail(ErrorKind::invalid_input, "VolterraParams: non-finite parameter");
  }
};

/// Inverse of the linear part: u(k) = d y1(k) + theta_bar' chi(k).
struct InverseFilterParams {
  double d = 0.0;
  Vector theta_bar;
};

inline double eval_p1(const VolterraParams& p, const Vector& mu) {
  if (mu.size() != p.theta1.size()) fail(ErrorKind::invalid_input, "eval_p1: mu has wrong dimension");
  return p.theta1.dot(mu);
}

inline double eval_p2(const VolterraParams& p, const Vector& mu2) {
  if (mu2.size() != p.theta2.size()) fail(ErrorKind::invalid_input, "eval_p2: mu2 has wrong dimension");
  return p.theta2.dot(mu2);
}

inline SignalSequence simulate(const VolterraParams& p, const SignalSequence& u, long long k_first, std::size_t T) {
  const LiftedSequence l = lift(u, p.M, k_first, T);
  std::vector<double> y(T);
  for (std::size_t t = 0; t < T; ++t) y[t] = eval_p1(p, l.mu[t]) + eval_p2(p, l.mu2[t]);
  return SignalSequence(k_first, std::move(y));
}

/// Symmetric kernel beta from the doubled vech form.
inline Matrix theta2_to_kernel(const Vector& theta2, std::size_t M) {
  const auto n = static_cast<Eigen::Index>(M + 1);
  if (theta2.size() != static_cast<Eigen::Index>(vech_size(M + 1)))
    fail(ErrorKind::invalid_input, "theta2_to_kernel: wrong theta2 length");
  Matrix beta(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = theta2(static_cast<Eigen::Index>(vech_index(static_cast<std::size_t>(i), static_cast<std::size_t>(j))));
      beta(i, j) = beta(j, i) = (i == j) ? v : 0.5 * v;
    }
  }
  return beta;
}

inline Vector kernel_to_theta2(const Matrix& beta) {
  Vector t = vech(beta);
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < beta.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j, ++p)
      if (i != j) t(p) *= 2.0;
  return t;
}

struct Assumption1Report {
  bool min_phase = false;
  double root_radius = 0.0;
};

/// Minimum-phase test of the linear part. Invertibility of I + P1^-1 P2 is
/// not decidable here; the closed loop checks it at run time.
inline Assumption1Report check_assumption1(const VolterraParams& p) {
  if (p.theta1.size() == 0 || p.theta1(0) == 0.0)
    fail(ErrorKind::inverse_unavailable, "check_assumption1: theta1[0] = 0, linear part is not invertible");
  Assumption1Report r;
  r.root_radius = polynomial_root_radius(std::span<const double>(p.theta1.data(), static_cast<std::size_t>(p.theta1.size())));
  r.min_phase = r.root_radius < 1.0;
  return r;
}

inline InverseFilterParams inverse_filter(const VolterraParams& p) {
  if (p.theta1.size() == 0 || p.theta1(0) == 0.0)
    fail(ErrorKind::inverse_unavailable, "inverse_filter: theta1[0] = 0, linear part is not invertible");
  InverseFilterParams f;
  f.d = 1.0 / p.theta1(0);
  f.theta_bar = -p.theta1.tail(static_cast<Eigen::Index>(p.M)) / p.theta1(0);
  return f;
}

/// Runs the inverse filter on y1 starting at k_first with the supplied past
/// inputs chi0 = [u(k_first-1), ..., u(k_first-M)].
inline SignalSequence apply_inverse_filter(const InverseFilterParams& f, const SignalSequence& y1, const Vector& chi0) {
  const Eigen::Index M = f.theta_bar.size();
  if (chi0.size() != M) fail(ErrorKind::invalid_input, "apply_inverse_filter: initial state has wrong dimension");
  Vector chi = chi0;
  std::vector<double> u(y1.size());
  for (std::size_t t = 0; t < y1.size(); ++t) {
    const double uk = f.d * y1.values()[t] + f.theta_bar.dot(chi);
    if (M > 0) {
      for (Eigen::Index i = M - 1; i > 0; --i) chi(i) = chi(i - 1);
      chi(0) = uk;
    }
    u[t] = uk;
  }
  return SignalSequence(y1.start_index(), std::move(u));
}

inline VolterraParams example1_params() {
  Vector t1(6);
  t1 << 4, 3, 0.82, 0.156, -0.014, -0.006;
  Vector t2(21);
  t2 << 0.8147, 0.9058, 0.127, 0.9134, 0.6324, 0.0975, 0.2785, 0.5469, 0.9575, 0.9649, 0.1576, 0.9706, 0.9572, 0.4854,
      0.8003, 0.1419, 0.4218, 0.9157, 0.7922, 0.9595, 0.6557;
  return VolterraParams(5, t1, t2);
}

/// y(u) = a u^2 + b u + c for mu = [u; chi], the form every closure solves.
struct Quadratic {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double operator()(double u) const noexcept { return (a * u + b) * u + c; }
};

/// Splits p1' mu + p2' mu2 into powers of the current input, chi held fixed.
inline Quadratic quadratic_in_current(const RowVector& p1, const RowVector& p2, const Vector& chi) {
  const Eigen::Index M = chi.size();
  if (p1.size() != M + 1 || p2.size() != static_cast<Eigen::Index>(vech_size(static_cast<std::size_t>(M) + 1)))
    fail(ErrorKind::invalid_input, "quadratic_in_current: operator dimensions do not match the state");
  Quadratic q;
  q.a = p2(0);
  q.b = p1(0);
  q.c = p1.tail(M).dot(chi);
  for (Eigen::Index i = 1; i <= M; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    q.b += p2(static_cast<Eigen::Index>(vech_index(iu, 0))) * chi(i - 1);
    for (Eigen::Index j = 1; j <= i; ++j)
      q.c += p2(static_cast<Eigen::Index>(vech_index(iu, static_cast<std::size_t>(j)))) * chi(i - 1) * chi(j - 1);
  }
  return q;
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Reads `M`, `theta1`, `theta2` under the given key prefix.
inline VolterraParams params_from_keys(const KeyValueFile& kv, const std::string& prefix = "") {
  const std::size_t M = kv.get_count(prefix + "M", 0);
  if (!kv.has(prefix + "M") || !kv.has(prefix + "theta1") || !kv.has(prefix + "theta2"))
    fail(ErrorKind::config, "parameters need " + prefix + "M, " + prefix + "theta1 and " + prefix + "theta2");
  try {
    return VolterraParams(M, to_eigen(kv.get_reals(prefix + "theta1", {})), to_eigen(kv.get_reals(prefix + "theta2", {})));
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
}

inline void write_params(std::ostream& os, const VolterraParams& p, const std::string& prefix = "") {
  os << prefix << "M = " << p.M << '\n';
  os << prefix << "theta1 = " << join_reals(to_std(p.theta1)) << '\n';
  os << prefix << "theta2 = " << join_reals(to_std(p.theta2)) << '\n';
}

inline VolterraParams read_params_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open parameter file '" + path + "'");
  return params_from_keys(KeyValueFile::parse(is, path));
}

}  // namespace dvsimc
