#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dvsimc/datarep.hpp"
#include "dvsimc/errors.hpp"
#include "dvsimc/format.hpp"
#include "dvsimc/numerics.hpp"
#include "dvsimc/plants.hpp"
#include "dvsimc/signals.hpp"
#include "dvsimc/volterra.hpp"

namespace dvsimc {

/// How the implicit control law is solved for u(k).
///  quadratic_solve: plant output y(u) taken from the plant's feedthrough, closed form.
///  fixed_point:     same equation, damped Picard iteration.
///  delayed:         y(k) measured before u(k) acts; the model plus an output
///                   offset predicts the sample u(k) will produce.
enum class ClosureStrategy { quadratic_solve, fixed_point, delayed };

inline const char* to_string(ClosureStrategy s) {
  switch (s) {
    case ClosureStrategy::quadratic_solve: return "quadratic-solve";
    case ClosureStrategy::fixed_point: return "fixed-point";
    case ClosureStrategy::delayed: return "delayed";
  }
  return "unknown";
}

inline ClosureStrategy closure_from_string(const std::string& s) {
  if (s == "quadratic-solve") return ClosureStrategy::quadratic_solve;
  if (s == "fixed-point") return ClosureStrategy::fixed_point;
  if (s == "delayed") return ClosureStrategy::delayed;
  fail(ErrorKind::config, "unknown closure strategy '" + s + "' (quadratic-solve | fixed-point | delayed)");
}

struct ClosureSettings {
  ClosureStrategy strategy = ClosureStrategy::quadratic_solve;
  /// Inner solver of the delayed strategy.
  bool delayed_fixed_point = false;
  double damping = 0.5;
  double tolerance = 1e-10;
  std::size_t max_iterations = 100;
};

struct InverseGain {
  RowVector K;
  RankReport rank;
};

/// K = U_ob [Y1_ob; X_ob]^+, so that u(k) = K [y1(k); chi(k)].
inline InverseGain build_inverse_gain(const DataDictionary& d, double tol = 0.0) {
  if (d.L != 1) fail(ErrorKind::invalid_input, "build_inverse_gain: needs a depth-one dictionary (L = 1)");
  if (!d.has_y1()) fail(ErrorKind::invalid_input, "build_inverse_gain: y1 data missing, run extract_y1 first");
  const Matrix z = vstack(d.Y1_ob, d.X_ob);
  InverseGain g;
  g.rank = numerical_rank(z, tol);
  const std::size_t need = d.M + 1;
  if (g.rank.numerical_rank != need)
    fail(ErrorKind::inverse_unavailable, "build_inverse_gain: [Y1_ob; X_ob] has rank " +
                                             std::to_string(g.rank.numerical_rank) + ", full row rank " +
                                             std::to_string(need) + " is required");
  g.K = d.U_ob * pinv(z, tol);
  if (!g.K.allFinite()) fail(ErrorKind::numeric, "build_inverse_gain: non-finite gain");
  return g;
}

struct StepOutcome {
  double u = 0.0;
  std::size_t iterations = 0;
  bool converged = true;
  /// No real root existed; the u^2 term was dropped for this step.
  bool curvature_dropped = false;
};

struct StepRecord {
  long long k = 0;
  double y_r = 0.0;
  double y_meas = 0.0;
  double y_noiseless = 0.0;
  double u = 0.0;
  double tracking_error = 0.0;
  std::size_t closure_iterations = 0;
  bool converged = true;
  bool curvature_dropped = false;
};

class ImcController {
 public:
  ImcController(OperatorPair ops, RowVector K, ClosureSettings settings, std::size_t output_delay = 0)
      : ops_(std::move(ops)), K_(std::move(K)), settings_(settings), delay_(output_delay) {
    const Eigen::Index n1 = ops_.P1.size();
    if (n1 < 1) fail(ErrorKind::invalid_input, "ImcController: empty P1");
    M_ = static_cast<std::size_t>(n1 - 1);
    if (K_.size() != n1) fail(ErrorKind::invalid_input, "ImcController: K must have 1 + M entries");
    if (ops_.P2.size() != static_cast<Eigen::Index>(vech_size(M_ + 1)))
      fail(ErrorKind::invalid_input, "ImcController: P2 has wrong dimension");
    if (!ops_.P1.allFinite() || !ops_.P2.allFinite() || !K_.allFinite())
      fail(ErrorKind::invalid_input, "ImcController: non-finite gains");
    if (!(settings_.damping > 0.0 && settings_.damping <= 1.0))
      fail(ErrorKind::invalid_input, "ImcController: damping must lie in (0, 1]");
    if (!(settings_.tolerance > 0.0) || settings_.max_iterations == 0)
      fail(ErrorKind::invalid_input, "ImcController: iteration tolerance and limit must be positive");
    if (settings_.strategy != ClosureStrategy::delayed && delay_ != 0)
      fail(ErrorKind::invalid_input, "ImcController: output delay requires the delayed closure");
    history_ = Vector::Zero(static_cast<Eigen::Index>(M_ + 1 + delay_));
  }

  std::size_t M() const noexcept { return M_; }
  std::size_t output_delay() const noexcept { return delay_; }
  const RowVector& K() const noexcept { return K_; }
  const OperatorPair& operators() const noexcept { return ops_; }
  const ClosureSettings& settings() const noexcept { return settings_; }

  /// [u(k-1), ..., u(k-M)].
  Vector chi() const { return history_.head(static_cast<Eigen::Index>(M_)); }
  double last_u() const { return history_(0); }

  /// Past inputs, newest first; length M + 1 + output_delay.
  const Vector& history() const noexcept { return history_; }

  void reset(const Vector& past_inputs) {
    if (past_inputs.size() != history_.size())
      fail(ErrorKind::invalid_input, "ImcController::reset: history must have M + 1 + delay entries");
    history_ = past_inputs;
  }

  void reset() { history_.setZero(); }

  /// Solves u = K [P1 mu(u) + y_r - y(u); chi] for u with y(u) given.
  StepOutcome solve(double y_r, const Quadratic& y_of_u, bool fixed_point) const {
    const Vector c = chi();
    const auto m = static_cast<Eigen::Index>(M_);
    const double k0 = K_(0);
    const double p1_chi = ops_.P1.tail(m).dot(c);
    const double k_chi = K_.tail(m).dot(c);
    // Residual G(u) = alpha u^2 + beta u + gamma.
    const double alpha = -k0 * y_of_u.a;
    const double beta = k0 * (ops_.P1(0) - y_of_u.b) - 1.0;
    const double gamma = k0 * (p1_chi + y_r - y_of_u.c) + k_chi;
    if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma))
      fail(ErrorKind::numeric, "imc_step: non-finite closure coefficients");
    StepOutcome out;
    const double anchor = last_u();
    if (fixed_point) {
      double u = anchor;
      out.converged = false;
      for (std::size_t j = 1; j <= settings_.max_iterations; ++j) {
        const double g = (alpha * u + beta) * u + gamma;
        const double next = u + settings_.damping * g;
        if (!std::isfinite(next)) break;
        out.iterations = j;
        const bool done = std::abs(next - u) <= settings_.tolerance * std::max(1.0, std::abs(next));
        u = next;
        if (done) {
          out.converged = true;
          break;
        }
      }
      if (!out.converged)
        fail(ErrorKind::closure_divergence,
             "imc_step: fixed-point closure did not converge in " + std::to_string(settings_.max_iterations) +
                 " iterations; I + P1^-1 P2 is not invertible along this trajectory (Assumption 1(ii))");
      out.u = u;
    } else {
      out.iterations = 1;
      try {
        out.u = solve_quadratic_nearest(alpha, beta, gamma, anchor);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric || beta == 0.0) throw;
        out.u = -gamma / beta;
        out.curvature_dropped = true;
      }
    }
    if (!std::isfinite(out.u)) fail(ErrorKind::numeric, "imc_step: non-finite control input");
    return out;
  }

  /// Shifts an applied input into the state.
  void commit(double u) {
    for (Eigen::Index i = history_.size() - 1; i > 0; --i) history_(i) = history_(i - 1);
    history_(0) = u;
  }

  /// Output model for the sample u(k) will produce, offset by the mismatch
  /// between y_meas and the model's prediction of that same sample.
  Quadratic delayed_output_model(double y_meas) const {
    const auto n1 = static_cast<Eigen::Index>(M_ + 1);
    const Vector past = history_.segment(static_cast<Eigen::Index>(delay_), n1);
    const double offset = y_meas - predict_output(ops_, past, vech_outer(past));
    Quadratic q = quadratic_in_current(ops_.P1, ops_.P2, chi());
    q.c += offset;
    return q;
  }

 private:
  OperatorPair ops_;
  RowVector K_;
  ClosureSettings settings_;
  std::size_t delay_ = 0;
  std::size_t M_ = 0;
  Vector history_;
};

/// One control step for a plant with feedthrough; y_of_u is the plant output
/// as a function of the input about to be applied. Commits u.
inline StepOutcome imc_step(ImcController& c, double y_r_k, const Quadratic& y_of_u) {
  if (c.settings().strategy == ClosureStrategy::delayed)
    fail(ErrorKind::invalid_input, "imc_step: the delayed closure takes a measurement, not a feedthrough model");
  StepOutcome o = c.solve(y_r_k, y_of_u, c.settings().strategy == ClosureStrategy::fixed_point);
  c.commit(o.u);
  return o;
}

/// One control step with the delayed closure: y_meas is taken before u(k) acts. Commits u.
inline StepOutcome imc_step(ImcController& c, double y_r_k, double y_meas) {
  if (c.settings().strategy != ClosureStrategy::delayed)
    fail(ErrorKind::invalid_input, "imc_step: measurement-driven step needs the delayed closure");
  StepOutcome o = c.solve(y_r_k, c.delayed_output_model(y_meas), c.settings().delayed_fixed_point);
  c.commit(o.u);
  return o;
}

struct ClosedLoopResult {
  std::vector<StepRecord> trace;
  std::optional<Error> failure;
  std::size_t curvature_dropped = 0;

  bool ok() const noexcept { return !failure.has_value(); }
};

/// Row k pairs y_r(k) and u(k) with the first output sample u(k) can affect.
/// The reference is held at its last value for the d extra samples this needs.
inline ClosedLoopResult run_closed_loop(ImcController& c, Plant& plant, const SignalSequence& y_r, std::size_t steps) {
  ClosedLoopResult res;
  if (steps == 0) return res;
  y_r.require_coverage(0, static_cast<long long>(steps) - 1, "run_closed_loop: reference");
  const std::size_t d = plant.output_delay();
  const bool delayed = c.settings().strategy == ClosureStrategy::delayed;
  if (delayed && c.output_delay() != d)
    fail(ErrorKind::invalid_input, "run_closed_loop: controller delay " + std::to_string(c.output_delay()) +
                                       " differs from plant delay " + std::to_string(d));
  if (!delayed && !plant.feedthrough())
    fail(ErrorKind::invalid_input, std::string("run_closed_loop: closure ") + to_string(c.settings().strategy) +
                                       " needs a plant with a known feedthrough");

  std::vector<double> meas{plant.measure()};
  std::vector<double> clean{plant.measure_noiseless()};
  std::vector<StepOutcome> outcomes;
  const auto ref = [&](std::size_t j) { return y_r[static_cast<long long>(std::min(j, steps - 1))]; };
  try {
    for (std::size_t j = 0; j < steps + d; ++j) {
      const StepOutcome o = delayed ? imc_step(c, ref(j), meas.back()) : imc_step(c, ref(j), *plant.feedthrough());
      plant.actuate(o.u);
      meas.push_back(plant.measure());
      clean.push_back(plant.measure_noiseless());
      outcomes.push_back(o);
      if (o.curvature_dropped) ++res.curvature_dropped;
      if (j >= d) {
        const std::size_t k = j - d;
        StepRecord r;
        r.k = static_cast<long long>(k);
        r.y_r = ref(k);
        r.y_meas = meas[k + d + 1];
        r.y_noiseless = clean[k + d + 1];
        r.u = outcomes[k].u;
        r.tracking_error = r.y_r - r.y_meas;
        r.closure_iterations = outcomes[k].iterations;
        r.converged = outcomes[k].converged;
        r.curvature_dropped = outcomes[k].curvature_dropped;
        res.trace.push_back(r);
      }
    }
  } catch (const Error& e) {
    res.failure = e;
  }
  return res;
}

inline SignalSequence trace_signal(const std::vector<StepRecord>& trace, bool noiseless = false) {
  std::vector<double> v;
  v.reserve(trace.size());
  for (const StepRecord& r : trace) v.push_back(noiseless ? r.y_noiseless : r.y_meas);
  return SignalSequence(trace.empty() ? 0 : trace.front().k, std::move(v));
}

inline void write_trace_csv(std::ostream& os, const std::vector<StepRecord>& trace) {
  os << "k,y_r,y,u,error,closure_iterations,converged\n";
  for (const StepRecord& r : trace) {
    os << r.k << ',' << format_real(r.y_r) << ',' << format_real(r.y_meas) << ',' << format_real(r.u) << ','
       << format_real(r.tracking_error) << ',' << r.closure_iterations << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

inline void write_trace_csv(const std::string& path, const std::vector<StepRecord>& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  write_trace_csv(os, trace);
  if (!os) fail(ErrorKind::io, "write to '" + path + "' failed");
}

}  // namespace dvsimc
