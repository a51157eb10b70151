#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dvsimc/errors.hpp"
#include "dvsimc/numerics.hpp"
#include "dvsimc/rng.hpp"
#include "dvsimc/signals.hpp"
#include "dvsimc/volterra.hpp"

namespace dvsimc {

/// Sampled plant. Each actuate(u) holds u for one sample period and produces
/// one new output sample; measure() returns the newest sample.
///
/// output_delay() = d means the sample produced by actuating u(k + d) is the
/// first one that depends on u(k). Plants with direct feedthrough have d = 0.
class Plant {
 public:
  virtual ~Plant() = default;

  virtual double measure() const = 0;
  virtual double measure_noiseless() const = 0;
  virtual void actuate(double u) = 0;
  virtual bool has_direct_feedthrough() const = 0;
  virtual std::size_t output_delay() const = 0;
  /// Noiseless output that actuate(u) would produce, as a quadratic in u.
  virtual std::optional<Quadratic> feedthrough() const { return std::nullopt; }
  /// Back to the configured initial state; the noise stream restarts.
  virtual void reset() = 0;
  virtual std::string type_name() const = 0;
};

/// Ideal second-order Volterra plant. Initial input history is zero unless set.
class DvsPlant final : public Plant {
 public:
  explicit DvsPlant(VolterraParams p, double noise_half_width = 0.0, std::uint64_t seed = 0)
      : p_(std::move(p)), noise_(noise_half_width), rng_(seed) {
    p_.validate();
    if (!(noise_ >= 0.0)) fail(ErrorKind::invalid_input, "DvsPlant: noise half-width must be >= 0");
    initial_ = Vector::Zero(static_cast<Eigen::Index>(p_.M + 1));
    reset();
  }

  const VolterraParams& params() const noexcept { return p_; }

  /// mu0 = [u(-1), u(-2), ..., u(-M-1)]: the window seen before the first actuation.
  void set_initial_inputs(const Vector& mu0) {
    if (mu0.size() != static_cast<Eigen::Index>(p_.M + 1))
      fail(ErrorKind::invalid_input, "DvsPlant: initial input window must have M+1 entries");
    initial_ = mu0;
    reset();
  }

  double measure() const override { return y_ + noise_sample(); }
  double measure_noiseless() const override { return y_; }

  void actuate(double u) override {
    if (!std::isfinite(u)) fail(ErrorKind::numeric, "DvsPlant: non-finite input");
    for (Eigen::Index i = mu_.size() - 1; i > 0; --i) mu_(i) = mu_(i - 1);
    mu_(0) = u;
    y_ = eval_p1(p_, mu_) + eval_p2(p_, vech_outer(mu_));
    ++samples_;
  }

  bool has_direct_feedthrough() const override { return true; }
  std::size_t output_delay() const override { return 0; }

  std::optional<Quadratic> feedthrough() const override {
    const Vector chi = mu_.head(static_cast<Eigen::Index>(p_.M));
    return quadratic_in_current(p_.theta1.transpose(), p_.theta2.transpose(), chi);
  }

  void reset() override {
    mu_ = initial_;
    y_ = eval_p1(p_, mu_) + eval_p2(p_, vech_outer(mu_));
    samples_ = 0;
  }

  std::string type_name() const override { return "dvs"; }

 private:
  double noise_sample() const {
    return noise_ == 0.0 ? 0.0 : rng_.uniform(samples_, -noise_, noise_);
  }

  VolterraParams p_;
  double noise_;
  CounterRng rng_;
  Vector initial_;
  Vector mu_;
  double y_ = 0.0;
  std::uint64_t samples_ = 0;
};

using State2 = std::array<double, 2>;

struct BilinearConfig {
  double rk4_step = 1e-4;
  double sample_time = 1.5;
  double noise_half_width = 0.05;
  std::uint64_t seed = 0;
  State2 x0{0.0, 0.0};
  std::size_t output_delay = 1;
};

/// x1' = x2 + x2 u,  x2' = -x1 - 4 x2 - x1 u + u,  y = x1 - x2.
inline State2 bilinear_rhs(const State2& x, double u) noexcept {
  return {x[1] + x[1] * u, -x[0] - 4.0 * x[1] - x[0] * u + u};
}

inline double bilinear_output(const State2& x) noexcept { return x[0] - x[1]; }

/// `substeps` classical RK4 steps of size h with u held constant.
inline State2 rk4_advance(State2 x, double u, double h, std::size_t substeps) {
  for (std::size_t n = 0; n < substeps; ++n) {
    const State2 k1 = bilinear_rhs(x, u);
    const State2 k2 = bilinear_rhs({x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]}, u);
    const State2 k3 = bilinear_rhs({x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]}, u);
    const State2 k4 = bilinear_rhs({x[0] + h * k3[0], x[1] + h * k3[1]}, u);
    x[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    x[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
  }
  return x;
}

/// Number of RK4 substeps per sample; the sample time must be a multiple of h.
inline std::size_t substeps_per_sample(double h, double sample_time) {
  if (!(h > 0.0) || !(sample_time > 0.0) || !std::isfinite(h) || !std::isfinite(sample_time))
    fail(ErrorKind::invalid_input, "bilinear plant: step size and sample time must be positive");
  const double ratio = sample_time / h;
  const double n = std::round(ratio);
  if (n < 1.0 || std::abs(ratio - n) > 1e-9 * ratio)
    fail(ErrorKind::invalid_input, "bilinear plant: sample time " + format_real(sample_time) +
                                       " is not an integer multiple of the RK4 step " + format_real(h));
  return static_cast<std::size_t>(n);
}

/// One zero-order-hold period; returns the state at the next sampling instant.
inline State2 bilinear_step(const State2& x, double u_held, double h, double sample_time) {
  const State2 next = rk4_advance(x, u_held, h, substeps_per_sample(h, sample_time));
  if (!std::isfinite(next[0]) || !std::isfinite(next[1]) || std::abs(next[0]) > 1e12 || std::abs(next[1]) > 1e12)
    fail(ErrorKind::instability, "bilinear plant: state diverged (|x| > 1e12)");
  return next;
}

class BilinearPlant final : public Plant {
 public:
  explicit BilinearPlant(BilinearConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
    substeps_ = substeps_per_sample(cfg_.rk4_step, cfg_.sample_time);
    if (!(cfg_.noise_half_width >= 0.0)) fail(ErrorKind::invalid_input, "bilinear plant: noise half-width must be >= 0");
    reset();
  }

  const BilinearConfig& config() const noexcept { return cfg_; }
  const State2& state() const noexcept { return x_; }

  double measure() const override {
    const double n = cfg_.noise_half_width == 0.0 ? 0.0 : rng_.uniform(samples_, -cfg_.noise_half_width, cfg_.noise_half_width);
    return bilinear_output(x_) + n;
  }

  double measure_noiseless() const override { return bilinear_output(x_); }

  void actuate(double u) override {
    if (!std::isfinite(u)) fail(ErrorKind::numeric, "bilinear plant: non-finite input");
    x_ = rk4_advance(x_, u, cfg_.rk4_step, substeps_);
    if (!std::isfinite(x_[0]) || !std::isfinite(x_[1]) || std::abs(x_[0]) > 1e12 || std::abs(x_[1]) > 1e12)
      fail(ErrorKind::instability, "bilinear plant: state diverged (|x| > 1e12) at sample " + std::to_string(samples_ + 1));
    ++samples_;
  }

  bool has_direct_feedthrough() const override { return false; }
  std::size_t output_delay() const override { return cfg_.output_delay; }

  void reset() override {
    x_ = cfg_.x0;
    samples_ = 0;
  }

  std::string type_name() const override { return "bilinear"; }

 private:
  BilinearConfig cfg_;
  CounterRng rng_;
  std::size_t substeps_ = 0;
  State2 x_{0.0, 0.0};
  std::uint64_t samples_ = 0;
};

struct CollectedData {
  SignalSequence u;            // [-M, T-1]
  SignalSequence y;            // [0, T-1], measured
  SignalSequence y_noiseless;  // [0, T-1]
};

/// Drives the plant with u(-M) .. u(T-1+d) and pairs y(k) with the sample
/// produced by actuating u(k+d).
inline CollectedData collect(Plant& plant, const SignalSequence& excitation, std::size_t M, std::size_t T) {
  const auto d = static_cast<long long>(plant.output_delay());
  const long long first = -static_cast<long long>(M);
  const long long t_end = static_cast<long long>(T);
  excitation.require_coverage(first, t_end - 1 + d, "collect: excitation");
  std::vector<double> y(T), y0(T);
  for (long long k = first; k < t_end + d; ++k) {
    plant.actuate(excitation[k]);
    const long long j = k - d;
    if (j >= 0 && j < t_end) {
      y[static_cast<std::size_t>(j)] = plant.measure();
      y0[static_cast<std::size_t>(j)] = plant.measure_noiseless();
    }
  }
  return {excitation.slice(first, t_end - 1), SignalSequence(0, std::move(y)), SignalSequence(0, std::move(y0))};
}

}  // namespace dvsimc
