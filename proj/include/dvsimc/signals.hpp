#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dvsimc/errors.hpp"
#include "dvsimc/format.hpp"
#include "dvsimc/numerics.hpp"
#include "dvsimc/rng.hpp"

namespace dvsimc {

/// Finite discrete-time sequence; sample k lives at values[k - start_index].
class SignalSequence {
 public:
  SignalSequence() = default;
  SignalSequence(long long start_index, std::vector<double> values)
      : start_(start_index), values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]))
        fail(ErrorKind::invalid_input,
             "SignalSequence: non-finite value at index " + std::to_string(start_ + static_cast<long long>(i)));
    }
  }

  long long start_index() const noexcept { return start_; }
  /// One past the last valid index.
  long long end_index() const noexcept { return start_ + static_cast<long long>(values_.size()); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  const std::vector<double>& values() const noexcept { return values_; }

  bool contains(long long k) const noexcept { return k >= start_ && k < end_index(); }

  bool covers(long long first, long long last) const noexcept {
    return first > last || (contains(first) && contains(last));
  }

  double operator[](long long k) const { return values_[static_cast<std::size_t>(k - start_)]; }

  double at(long long k) const {
    if (!contains(k))
      fail(ErrorKind::window, "SignalSequence: index " + std::to_string(k) + " outside [" + std::to_string(start_) +
                                  ", " + std::to_string(end_index() - 1) + "]");
    return (*this)[k];
  }

  /// Samples first..last inclusive as a new sequence.
  SignalSequence slice(long long first, long long last) const {
    require_coverage(first, last, "slice");
    return SignalSequence(first, std::vector<double>(values_.begin() + (first - start_),
                                                     values_.begin() + (last - start_) + 1));
  }

  void require_coverage(long long first, long long last, const std::string& what) const {
    if (covers(first, last)) return;
    std::string have = empty() ? std::string("nothing")
                               : "[" + std::to_string(start_) + ", " + std::to_string(end_index() - 1) + "]";
    fail(ErrorKind::window, what + ": need samples [" + std::to_string(first) + ", " + std::to_string(last) +
                                "] but sequence covers " + have);
  }

  friend bool operator==(const SignalSequence&, const SignalSequence&) = default;

 private:
  long long start_ = 0;
  std::vector<double> values_;
};

/// mu(k) = [u(k), ..., u(k-M)] and mu2(k) = vech(mu(k) mu(k)^T) for k = k_first .. k_first+T-1.
struct LiftedSequence {
  std::size_t M = 0;
  long long k_first = 0;
  std::vector<Vector> mu;
  std::vector<Vector> mu2;

  std::size_t size() const noexcept { return mu.size(); }
};

inline Vector regressor(const SignalSequence& u, std::size_t M, long long k) {
  Vector m(static_cast<Eigen::Index>(M + 1));
  for (std::size_t i = 0; i <= M; ++i) m(static_cast<Eigen::Index>(i)) = u[k - static_cast<long long>(i)];
  return m;
}

inline LiftedSequence lift(const SignalSequence& u, std::size_t M, long long k_first, std::size_t T) {
  const long long mm = static_cast<long long>(M);
  if (T > 0) u.require_coverage(k_first - mm, k_first + static_cast<long long>(T) - 1, "lift");
  LiftedSequence out;
  out.M = M;
  out.k_first = k_first;
  out.mu.reserve(T);
  out.mu2.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    Vector m = regressor(u, M, k_first + static_cast<long long>(t));
    out.mu2.push_back(vech_outer(m));
    out.mu.push_back(std::move(m));
  }
  return out;
}

/// Block Hankel matrix: block (i, j) = s[i + j], i < L, j < N.
inline Matrix hankel(const std::vector<Vector>& s, std::size_t L, std::size_t N) {
  if (L == 0 || N == 0) fail(ErrorKind::invalid_input, "hankel: depth and width must be positive");
  if (s.size() < L + N - 1)
    fail(ErrorKind::window, "hankel: need " + std::to_string(L + N - 1) + " elements, have " + std::to_string(s.size()));
  const Eigen::Index dim = s.front().size();
  Matrix h(dim * static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      const Vector& e = s[i + j];
      if (e.size() != dim) fail(ErrorKind::invalid_input, "hankel: elements have different dimensions");
      h.block(static_cast<Eigen::Index>(i) * dim, static_cast<Eigen::Index>(j), dim, 1) = e;
    }
  }
  return h;
}

inline Matrix hankel(const std::vector<double>& s, std::size_t L, std::size_t N) {
  std::vector<Vector> v;
  v.reserve(s.size());
  for (double x : s) v.push_back(Vector::Constant(1, x));
  return hankel(v, L, N);
}

/// u(k) = offset + sum_i A_i sin(2 pi f_i k + phi_i), f in cycles/sample.
inline SignalSequence multisine(const std::vector<double>& amplitudes, const std::vector<double>& frequencies,
                                const std::vector<double>& phases, double offset, long long k_first,
                                std::size_t length) {
  if (amplitudes.size() != frequencies.size() || amplitudes.size() != phases.size())
    fail(ErrorKind::invalid_input, "multisine: amplitude, frequency and phase lists differ in length");
  std::vector<double> v(length, offset);
  for (std::size_t t = 0; t < length; ++t) {
    const double k = static_cast<double>(k_first + static_cast<long long>(t));
    for (std::size_t i = 0; i < amplitudes.size(); ++i)
      v[t] += amplitudes[i] * std::sin(2.0 * std::numbers::pi * frequencies[i] * k + phases[i]);
  }
  return SignalSequence(k_first, std::move(v));
}

/// Phases uniform on [0, 2 pi) from a seeded stream.
inline std::vector<double> random_phases(std::size_t n, std::uint64_t seed) {
  const CounterRng rng(seed);
  std::vector<double> ph(n);
  for (std::size_t i = 0; i < n; ++i) ph[i] = 2.0 * std::numbers::pi * rng.uniform(i);
  return ph;
}

struct MultisineSpec {
  std::vector<double> amplitudes;
  std::vector<double> frequencies;
  std::vector<double> phases;
  double offset = 0.0;

  SignalSequence generate(long long k_first, std::size_t length) const {
    return multisine(amplitudes, frequencies, phases, offset, k_first, length);
  }
};

/// Default excitation: eight unit sinusoids with seeded phases.
inline MultisineSpec preset_excitation(std::uint64_t seed) {
  MultisineSpec s;
  s.frequencies = {0.013, 0.029, 0.053, 0.071, 0.097, 0.121, 0.144, 0.171};
  s.amplitudes.assign(s.frequencies.size(), 1.0);
  s.phases = random_phases(s.frequencies.size(), seed);
  return s;
}

/// Sample i of the sequence gets draw i of the stream.
inline SignalSequence add_uniform_noise(const SignalSequence& s, double half_width, std::uint64_t seed) {
  if (!(half_width >= 0.0) || !std::isfinite(half_width))
    fail(ErrorKind::invalid_input, "add_uniform_noise: half_width must be finite and >= 0");
  if (half_width == 0.0) return s;
  const CounterRng rng(seed);
  std::vector<double> v = s.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += rng.uniform(i, -half_width, half_width);
  return SignalSequence(s.start_index(), std::move(v));
}

struct TrackingMetrics {
  double rms = 0.0;
  double max_abs = 0.0;
  std::size_t samples = 0;
};

/// Error statistics of y_r - y over the common index range, skipping `transient` samples.
inline TrackingMetrics tracking_metrics(const SignalSequence& y, const SignalSequence& y_r, std::size_t transient) {
  const long long first = std::max(y.start_index(), y_r.start_index());
  const long long last = std::min(y.end_index(), y_r.end_index());
  if (last <= first) fail(ErrorKind::window, "tracking_metrics: sequences do not overlap");
  const long long overlap = last - first;
  if (static_cast<long long>(transient) >= overlap)
    fail(ErrorKind::window, "tracking_metrics: transient " + std::to_string(transient) +
                                " is not shorter than the overlap " + std::to_string(overlap));
  TrackingMetrics m;
  double sum_sq = 0.0;
  for (long long k = first + static_cast<long long>(transient); k < last; ++k) {
    const double e = y_r[k] - y[k];
    sum_sq += e * e;
    m.max_abs = std::max(m.max_abs, std::abs(e));
    ++m.samples;
  }
  m.rms = std::sqrt(sum_sq / static_cast<double>(m.samples));
  return m;
}

inline void write_signal_csv(std::ostream& os, const SignalSequence& s) {
  os << "k,value\n";
  for (long long k = s.start_index(); k < s.end_index(); ++k) os << k << ',' << format_real(s[k]) << '\n';
}

inline void write_signal_csv(const std::string& path, const SignalSequence& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  write_signal_csv(os, s);
  if (!os) fail(ErrorKind::io, "write to '" + path + "' failed");
}

/// Reads `k,value` rows; indices must be consecutive.
inline SignalSequence read_signal_csv(std::istream& is, const std::string& name = "signal") {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::invalid_input, name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "k,value") fail(ErrorKind::invalid_input, name + ": expected header 'k,value', got '" + line + "'");
  std::vector<double> values;
  long long start = 0;
  long long expected = 0;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      fail(ErrorKind::invalid_input, name + ": line " + std::to_string(row) + " has no comma");
    const std::string where = name + " line " + std::to_string(row);
    const long long k = parse_integer(std::string_view(line).substr(0, comma), where);
    const double v = parse_real(std::string_view(line).substr(comma + 1), where);
    if (values.empty()) {
      start = k;
    } else if (k != expected) {
      fail(ErrorKind::invalid_input, where + ": index " + std::to_string(k) + " follows " + std::to_string(expected - 1));
    }
    expected = k + 1;
    values.push_back(v);
  }
  return SignalSequence(start, std::move(values));
}

inline SignalSequence read_signal_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open '" + path + "'");
  return read_signal_csv(is, path);
}

}  // namespace dvsimc
