#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dvsimc/datarep.hpp"
#include "dvsimc/errors.hpp"
#include "dvsimc/format.hpp"
#include "dvsimc/imc.hpp"
#include "dvsimc/keyvalue.hpp"
#include "dvsimc/plants.hpp"
#include "dvsimc/signals.hpp"
#include "dvsimc/volterra.hpp"

namespace dvsimc {

inline constexpr const char* kVersion = "dvsimc 1.0.0";

struct ReferenceSpec {
  enum class Kind { multisine, smoothstep } kind = Kind::multisine;
  MultisineSpec multisine;
  /// Smoothstep reference: starts at 0 and blends into each level in turn.
  std::vector<double> levels;
  std::size_t segment = 25;
  double ramp = 12.0;

  double at(long long k) const {
    if (kind == Kind::multisine) {
      double v = multisine.offset;
      for (std::size_t i = 0; i < multisine.amplitudes.size(); ++i)
        v += multisine.amplitudes[i] *
             std::sin(2.0 * std::numbers::pi * multisine.frequencies[i] * static_cast<double>(k) + multisine.phases[i]);
      return v;
    }
    if (levels.empty() || k < 0) return 0.0;
    const auto n = static_cast<std::size_t>(k);
    const std::size_t i = n / segment;
    const double t = std::min(static_cast<double>(n % segment) / ramp, 1.0);
    const double s = t * t * (3.0 - 2.0 * t);
    const double from = i == 0 ? 0.0 : levels[std::min(i - 1, levels.size() - 1)];
    const double to = levels[std::min(i, levels.size() - 1)];
    return from + (to - from) * s;
  }

  SignalSequence generate(std::size_t steps) const {
    std::vector<double> v(steps);
    for (std::size_t k = 0; k < steps; ++k) v[k] = at(static_cast<long long>(k));
    return SignalSequence(0, std::move(v));
  }
};

struct ExperimentConfig {
  std::string name = "custom";

  std::string plant_type = "dvs";
  VolterraParams dvs = example1_params();
  BilinearConfig bilinear;
  double plant_noise = 0.0;
  std::uint64_t collect_seed = 1;
  std::uint64_t closed_loop_seed = 2;
  State2 closed_loop_x0{0.0, 0.0};

  std::size_t T = 200;
  MultisineSpec excitation = preset_excitation(7);
  std::uint64_t phase_seed = 7;

  std::vector<std::size_t> M_values{5};
  std::size_t L = 1;
  DataRepOptions rep;

  ClosureSettings closure;
  std::size_t steps = 300;
  std::size_t transient = 12;
  ReferenceSpec reference;

  std::size_t max_M() const { return *std::max_element(M_values.begin(), M_values.end()); }
  std::size_t output_delay() const { return plant_type == "bilinear" ? bilinear.output_delay : 0; }

  void validate() const {
    if (plant_type != "dvs" && plant_type != "bilinear")
      fail(ErrorKind::config, "plant.type must be dvs or bilinear, got '" + plant_type + "'");
    if (plant_type == "dvs") dvs.validate();
    if (plant_type == "bilinear") {
      substeps_per_sample(bilinear.rk4_step, bilinear.sample_time);
      if (!(bilinear.noise_half_width >= 0.0)) fail(ErrorKind::config, "plant.noise_half_width must be >= 0");
    }
    if (!(plant_noise >= 0.0)) fail(ErrorKind::config, "plant.noise_half_width must be >= 0");
    if (M_values.empty()) fail(ErrorKind::config, "representation.M must list at least one memory length");
    if (L == 0) fail(ErrorKind::config, "representation.L must be positive");
    if (T == 0) fail(ErrorKind::config, "excitation.T must be positive");
    if (excitation.amplitudes.size() != excitation.frequencies.size() ||
        excitation.amplitudes.size() != excitation.phases.size())
      fail(ErrorKind::config, "excitation amplitudes, frequencies and phases differ in length");
    if (reference.kind == ReferenceSpec::Kind::multisine &&
        (reference.multisine.amplitudes.size() != reference.multisine.frequencies.size() ||
         reference.multisine.amplitudes.size() != reference.multisine.phases.size()))
      fail(ErrorKind::config, "reference amplitudes, frequencies and phases differ in length");
    if (reference.kind == ReferenceSpec::Kind::smoothstep && (reference.segment == 0 || !(reference.ramp > 0.0)))
      fail(ErrorKind::config, "reference.segment and reference.ramp must be positive");
    if (!(closure.damping > 0.0 && closure.damping <= 1.0)) fail(ErrorKind::config, "controller.damping must lie in (0, 1]");
    if (!(closure.tolerance > 0.0) || closure.max_iterations == 0)
      fail(ErrorKind::config, "controller.tolerance and controller.max_iterations must be positive");
    if (closure.strategy != ClosureStrategy::delayed && output_delay() != 0)
      fail(ErrorKind::config, "a plant with output delay needs controller.closure = delayed");
    if (closure.strategy != ClosureStrategy::delayed && plant_type != "dvs")
      fail(ErrorKind::config, "closure " + std::string(to_string(closure.strategy)) + " needs the dvs plant");
    if (steps > 0 && transient >= steps) fail(ErrorKind::config, "controller.transient must be shorter than controller.steps");
  }
};

namespace detail {

inline std::string join_counts(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

}  // namespace detail

inline ExperimentConfig example1_config() {
  ExperimentConfig c;
  c.name = "example1";
  c.plant_type = "dvs";
  c.dvs = example1_params();
  c.T = 200;
  c.phase_seed = 7;
  c.excitation = preset_excitation(c.phase_seed);
  c.M_values = {5};
  c.closure.strategy = ClosureStrategy::quadratic_solve;
  c.steps = 300;
  c.transient = 12;
  c.reference.kind = ReferenceSpec::Kind::multisine;
  c.reference.multisine.amplitudes = {1.0, 0.5};
  c.reference.multisine.frequencies = {0.011, 0.023};
  c.reference.multisine.phases = {0.0, 0.7};
  return c;
}

inline ExperimentConfig example2_config() {
  ExperimentConfig c;
  c.name = "example2";
  c.plant_type = "bilinear";
  c.bilinear.rk4_step = 1e-4;
  c.bilinear.sample_time = 1.5;
  c.bilinear.noise_half_width = 0.05;
  c.bilinear.x0 = {1.0, 0.0};
  c.bilinear.output_delay = 1;
  c.closed_loop_x0 = {0.0, 0.0};
  c.collect_seed = 11;
  c.closed_loop_seed = 12;
  c.T = 5000;
  c.phase_seed = 1;
  const std::size_t n = 24;
  c.excitation.amplitudes.assign(n, 0.05);
  c.excitation.frequencies.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    c.excitation.frequencies[i] = 0.01 + (0.45 - 0.01) * static_cast<double>(i) / static_cast<double>(n - 1);
  c.excitation.phases = random_phases(n, c.phase_seed);
  c.M_values = {3, 4, 5};
  c.rep.noisy = true;
  c.rep.noise_level = 0.05;
  c.closure.strategy = ClosureStrategy::delayed;
  c.steps = 100;
  c.transient = 10;
  c.reference.kind = ReferenceSpec::Kind::smoothstep;
  c.reference.levels = {0.25, -0.15, 0.2};
  c.reference.segment = 25;
  c.reference.ramp = 12.0;
  return c;
}

/// Starts from the preset named by `experiment.preset` (default: example1) and applies overrides.
inline ExperimentConfig config_from_keys(const KeyValueFile& kv) {
  const std::string preset = kv.get_string("experiment.preset", "example1");
  ExperimentConfig c;
  if (preset == "example1") c = example1_config();
  else if (preset == "example2") c = example2_config();
  else fail(ErrorKind::config, "experiment.preset must be example1 or example2, got '" + preset + "'");
  c.name = kv.get_string("experiment.name", c.name);

  c.plant_type = kv.get_string("plant.type", c.plant_type);
  if (kv.has("plant.M") || kv.has("plant.theta1") || kv.has("plant.theta2")) c.dvs = params_from_keys(kv, "plant.");
  const double noise_default = c.plant_type == "bilinear" ? c.bilinear.noise_half_width : c.plant_noise;
  const double noise = kv.get_real("plant.noise_half_width", noise_default);
  c.plant_noise = noise;
  c.bilinear.noise_half_width = noise;
  c.bilinear.rk4_step = kv.get_real("plant.rk4_step", c.bilinear.rk4_step);
  c.bilinear.sample_time = kv.get_real("plant.sample_time", c.bilinear.sample_time);
  c.bilinear.output_delay = kv.get_count("plant.output_delay", c.bilinear.output_delay);
  const auto state = [&](const std::string& key, State2 fallback) {
    const auto v = kv.get_reals(key, {fallback[0], fallback[1]});
    if (v.size() != 2) fail(ErrorKind::config, key + ": expected two values");
    return State2{v[0], v[1]};
  };
  c.bilinear.x0 = state("plant.x0", c.bilinear.x0);
  c.closed_loop_x0 = state("plant.closed_loop_x0", c.closed_loop_x0);
  c.collect_seed = kv.get_seed("plant.seed", c.collect_seed);
  c.closed_loop_seed = kv.get_seed("plant.closed_loop_seed", c.closed_loop_seed);

  c.T = kv.get_count("excitation.T", c.T);
  c.excitation.amplitudes = kv.get_reals("excitation.amplitudes", c.excitation.amplitudes);
  c.excitation.frequencies = kv.get_reals("excitation.frequencies", c.excitation.frequencies);
  c.excitation.offset = kv.get_real("excitation.offset", c.excitation.offset);
  if (kv.has("excitation.phases")) {
    c.excitation.phases = kv.get_reals("excitation.phases", {});
    c.phase_seed = kv.get_seed("excitation.phase_seed", c.phase_seed);
  } else if (kv.has("excitation.phase_seed") || c.excitation.phases.size() != c.excitation.frequencies.size()) {
    c.phase_seed = kv.get_seed("excitation.phase_seed", c.phase_seed);
    c.excitation.phases = random_phases(c.excitation.frequencies.size(), c.phase_seed);
  }

  if (kv.has("representation.M")) {
    c.M_values.clear();
    for (double m : kv.get_reals("representation.M", {})) {
      if (m < 0 || m != std::floor(m) || m > 64) fail(ErrorKind::config, "representation.M: invalid memory length");
      c.M_values.push_back(static_cast<std::size_t>(m));
    }
  }
  c.L = kv.get_count("representation.L", c.L);
  c.rep.rank_tolerance = kv.get_real("representation.rank_tolerance", c.rep.rank_tolerance);
  c.rep.cross_check = kv.get_bool("representation.cross_check", c.rep.cross_check);
  c.rep.noisy = kv.get_bool("representation.noisy", c.rep.noisy);
  c.rep.noise_level = kv.get_real("representation.noise_level", c.rep.noise_level);

  if (kv.has("controller.closure")) c.closure.strategy = closure_from_string(kv.raw("controller.closure"));
  if (kv.has("controller.delayed_inner")) {
    const std::string inner = kv.raw("controller.delayed_inner");
    if (inner != "quadratic-solve" && inner != "fixed-point")
      fail(ErrorKind::config, "controller.delayed_inner must be quadratic-solve or fixed-point");
    c.closure.delayed_fixed_point = inner == "fixed-point";
  }
  c.closure.damping = kv.get_real("controller.damping", c.closure.damping);
  c.closure.tolerance = kv.get_real("controller.tolerance", c.closure.tolerance);
  c.closure.max_iterations = kv.get_count("controller.max_iterations", c.closure.max_iterations);
  c.steps = kv.get_count("controller.steps", c.steps);
  c.transient = kv.get_count("controller.transient", c.transient);

  if (kv.has("reference.kind")) {
    const std::string k = kv.raw("reference.kind");
    if (k == "multisine") c.reference.kind = ReferenceSpec::Kind::multisine;
    else if (k == "smoothstep") c.reference.kind = ReferenceSpec::Kind::smoothstep;
    else fail(ErrorKind::config, "reference.kind must be multisine or smoothstep");
  }
  c.reference.multisine.amplitudes = kv.get_reals("reference.amplitudes", c.reference.multisine.amplitudes);
  c.reference.multisine.frequencies = kv.get_reals("reference.frequencies", c.reference.multisine.frequencies);
  c.reference.multisine.phases = kv.get_reals("reference.phases", c.reference.multisine.phases);
  c.reference.multisine.offset = kv.get_real("reference.offset", c.reference.multisine.offset);
  c.reference.levels = kv.get_reals("reference.levels", c.reference.levels);
  c.reference.segment = kv.get_count("reference.segment", c.reference.segment);
  c.reference.ramp = kv.get_real("reference.ramp", c.reference.ramp);

  const auto unused = kv.unused_keys();
  if (!unused.empty()) fail(ErrorKind::config, "unknown config key '" + unused.front() + "'");
  c.validate();
  return c;
}

inline ExperimentConfig read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::io, "cannot open config file '" + path + "'");
  return config_from_keys(KeyValueFile::parse(is, path));
}

/// Every field, explicitly; parsing this text yields the same configuration.
inline std::string echo_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "experiment.preset = " << (c.plant_type == "bilinear" ? "example2" : "example1") << '\n';
  os << "experiment.name = " << c.name << '\n';
  os << "plant.type = " << c.plant_type << '\n';
  if (c.plant_type == "dvs") {
    write_params(os, c.dvs, "plant.");
    os << "plant.noise_half_width = " << format_real(c.plant_noise) << '\n';
  } else {
    os << "plant.noise_half_width = " << format_real(c.bilinear.noise_half_width) << '\n';
    os << "plant.rk4_step = " << format_real(c.bilinear.rk4_step) << '\n';
    os << "plant.sample_time = " << format_real(c.bilinear.sample_time) << '\n';
    os << "plant.output_delay = " << c.bilinear.output_delay << '\n';
    os << "plant.x0 = " << join_reals({c.bilinear.x0[0], c.bilinear.x0[1]}) << '\n';
    os << "plant.closed_loop_x0 = " << join_reals({c.closed_loop_x0[0], c.closed_loop_x0[1]}) << '\n';
  }
  os << "plant.seed = " << c.collect_seed << '\n';
  os << "plant.closed_loop_seed = " << c.closed_loop_seed << '\n';
  os << "excitation.T = " << c.T << '\n';
  os << "excitation.amplitudes = " << join_reals(c.excitation.amplitudes) << '\n';
  os << "excitation.frequencies = " << join_reals(c.excitation.frequencies) << '\n';
  os << "excitation.phases = " << join_reals(c.excitation.phases) << '\n';
  os << "excitation.phase_seed = " << c.phase_seed << '\n';
  os << "excitation.offset = " << format_real(c.excitation.offset) << '\n';
  os << "representation.M = " << detail::join_counts(c.M_values) << '\n';
  os << "representation.L = " << c.L << '\n';
  os << "representation.rank_tolerance = " << format_real(c.rep.rank_tolerance) << '\n';
  os << "representation.cross_check = " << (c.rep.cross_check ? "true" : "false") << '\n';
  os << "representation.noisy = " << (c.rep.noisy ? "true" : "false") << '\n';
  os << "representation.noise_level = " << format_real(c.rep.noise_level) << '\n';
  os << "controller.closure = " << to_string(c.closure.strategy) << '\n';
  os << "controller.delayed_inner = " << (c.closure.delayed_fixed_point ? "fixed-point" : "quadratic-solve") << '\n';
  os << "controller.damping = " << format_real(c.closure.damping) << '\n';
  os << "controller.tolerance = " << format_real(c.closure.tolerance) << '\n';
  os << "controller.max_iterations = " << c.closure.max_iterations << '\n';
  os << "controller.steps = " << c.steps << '\n';
  os << "controller.transient = " << c.transient << '\n';
  if (c.reference.kind == ReferenceSpec::Kind::multisine) {
    os << "reference.kind = multisine\n";
    os << "reference.amplitudes = " << join_reals(c.reference.multisine.amplitudes) << '\n';
    os << "reference.frequencies = " << join_reals(c.reference.multisine.frequencies) << '\n';
    os << "reference.phases = " << join_reals(c.reference.multisine.phases) << '\n';
    os << "reference.offset = " << format_real(c.reference.multisine.offset) << '\n';
  } else {
    os << "reference.kind = smoothstep\n";
    os << "reference.levels = " << join_reals(c.reference.levels) << '\n';
    os << "reference.segment = " << c.reference.segment << '\n';
    os << "reference.ramp = " << format_real(c.reference.ramp) << '\n';
  }
  return os.str();
}

inline std::unique_ptr<Plant> make_collection_plant(const ExperimentConfig& c) {
  if (c.plant_type == "dvs") return std::make_unique<DvsPlant>(c.dvs, c.plant_noise, c.collect_seed);
  BilinearConfig b = c.bilinear;
  b.seed = c.collect_seed;
  return std::make_unique<BilinearPlant>(b);
}

inline std::unique_ptr<Plant> make_closed_loop_plant(const ExperimentConfig& c, std::size_t M) {
  const std::uint64_t seed = c.closed_loop_seed + 1000 * static_cast<std::uint64_t>(M);
  if (c.plant_type == "dvs") return std::make_unique<DvsPlant>(c.dvs, c.plant_noise, seed);
  BilinearConfig b = c.bilinear;
  b.x0 = c.closed_loop_x0;
  b.seed = seed;
  return std::make_unique<BilinearPlant>(b);
}

/// One experiment for the largest M; smaller M reuse the same samples.
inline CollectedData collect_data(const ExperimentConfig& c) {
  c.validate();
  auto plant = make_collection_plant(c);
  const std::size_t M = c.max_M();
  const SignalSequence u = c.excitation.generate(-static_cast<long long>(M), c.T + M + plant->output_delay());
  return collect(*plant, u, M, c.T);
}

struct LoopMetrics {
  TrackingMetrics full;
  TrackingMetrics after_transient;
  TrackingMetrics noiseless_after_transient;
  double reference_peak_to_peak = 0.0;
};

struct PipelineResult {
  std::size_t M = 0;
  PersistenceReport pe;
  OperatorExtraction operators;
  Y1Extraction y1;
  InverseGain gain;
  std::optional<Assumption1Report> assumption1;
  ClosedLoopResult loop;
  LoopMetrics metrics;
  std::vector<std::string> warnings;
};

/// Peak-to-peak of the reference, counting the zero the loop starts from.
inline double reference_peak_to_peak(const SignalSequence& y_r) {
  double lo = 0.0, hi = 0.0;
  for (double v : y_r.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

inline LoopMetrics loop_metrics(const ClosedLoopResult& loop, const SignalSequence& y_r, std::size_t transient) {
  LoopMetrics m;
  m.reference_peak_to_peak = reference_peak_to_peak(y_r);
  if (loop.trace.size() <= transient) return m;
  const SignalSequence y = trace_signal(loop.trace);
  const SignalSequence y0 = trace_signal(loop.trace, true);
  m.full = tracking_metrics(y, y_r, 0);
  m.after_transient = tracking_metrics(y, y_r, transient);
  m.noiseless_after_transient = tracking_metrics(y0, y_r, transient);
  return m;
}

/// Dictionary, PE test, operators, y1, inverse gain, closed loop. Throws on
/// representation failures; closed-loop failures are kept in result.loop.
inline PipelineResult run_pipeline(const ExperimentConfig& c, const CollectedData& data, std::size_t M) {
  PipelineResult r;
  r.M = M;
  if (c.plant_type == "dvs") r.assumption1 = check_assumption1(c.dvs);
  DataRepresentation rep(build_dictionary(data.u, data.y, M, c.L, c.T), c.rep);
  r.pe = rep.report();
  rep.require_pe("pipeline");
  r.operators = extract_operators(rep);
  r.y1 = extract_y1(rep.dictionary(), r.operators.ops, c.rep);
  r.gain = build_inverse_gain(rep.dictionary(), c.rep.rank_tolerance);
  for (const auto& w : r.operators.warnings) r.warnings.push_back(w);
  for (const auto& w : r.y1.warnings) r.warnings.push_back(w);

  ImcController ctrl(r.operators.ops, r.gain.K, c.closure, c.closure.strategy == ClosureStrategy::delayed ? c.output_delay() : 0);
  auto plant = make_closed_loop_plant(c, M);
  const SignalSequence y_r = c.reference.generate(c.steps);
  r.loop = run_closed_loop(ctrl, *plant, y_r, c.steps);
  r.metrics = loop_metrics(r.loop, y_r, c.transient);
  if (r.loop.curvature_dropped > 0)
    r.warnings.push_back("closure had no real root in " + std::to_string(r.loop.curvature_dropped) +
                         " steps; the quadratic term was dropped there");
  return r;
}

inline void write_operators_csv(std::ostream& os, const PipelineResult& r) {
  const auto row = [&](const char* name, const RowVector& v) {
    os << name;
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_real(v(i));
    os << '\n';
  };
  os << "name,values\n";
  row("P1", r.operators.ops.P1);
  row("P2", r.operators.ops.P2);
  row("K", r.gain.K);
}

inline void write_metrics(std::ostream& os, const ExperimentConfig& c, const PipelineResult& r) {
  os << "version = " << kVersion << '\n';
  os << "experiment = " << c.name << '\n';
  os << "M = " << r.M << '\n';
  os << "closure = " << to_string(c.closure.strategy) << '\n';
  os << "collect_seed = " << c.collect_seed << '\n';
  os << "closed_loop_seed = " << c.closed_loop_seed + 1000 * static_cast<std::uint64_t>(r.M) << '\n';
  os << "phase_seed = " << c.phase_seed << '\n';
  if (r.assumption1) {
    os << "assumption1.min_phase = " << (r.assumption1->min_phase ? "true" : "false") << '\n';
    os << "assumption1.root_radius = " << format_real(r.assumption1->root_radius) << '\n';
  }
  os << "pe.achieved_rank = " << r.pe.achieved_rank << '\n';
  os << "pe.required_rank = " << r.pe.required_rank << '\n';
  os << "operators.cross_check_deviation = " << format_real(r.operators.cross_check_deviation) << '\n';
  os << "y1.discrepancy = " << format_real(r.y1.discrepancy) << '\n';
  os << "steps = " << r.loop.trace.size() << '\n';
  os << "transient = " << c.transient << '\n';
  os << "diverged = " << (r.loop.ok() ? "false" : "true") << '\n';
  if (r.loop.failure) os << "failure = " << r.loop.failure->what() << '\n';
  os << "curvature_dropped_steps = " << r.loop.curvature_dropped << '\n';
  os << "reference_peak_to_peak = " << format_real(r.metrics.reference_peak_to_peak) << '\n';
  os << "rms_full = " << format_real(r.metrics.full.rms) << '\n';
  os << "max_abs_full = " << format_real(r.metrics.full.max_abs) << '\n';
  os << "rms_after_transient = " << format_real(r.metrics.after_transient.rms) << '\n';
  os << "max_abs_after_transient = " << format_real(r.metrics.after_transient.max_abs) << '\n';
  os << "rms_noiseless_after_transient = " << format_real(r.metrics.noiseless_after_transient.rms) << '\n';
  os << "max_abs_noiseless_after_transient = " << format_real(r.metrics.noiseless_after_transient.max_abs) << '\n';
  for (const auto& w : r.warnings) os << "warning = " << w << '\n';
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open '" + p.string() + "' for writing");
  os << text;
  if (!os) fail(ErrorKind::io, "write to '" + p.string() + "' failed");
}

inline void make_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory '" + p.string() + "': " + ec.message());
}

}  // namespace detail

/// config.echo, pe_report.json, operators.csv, trace.csv, metrics.txt.
inline void write_bundle(const std::filesystem::path& dir, const ExperimentConfig& c, const PipelineResult& r) {
  detail::make_dir(dir);
  detail::write_file(dir / "config.echo", echo_config(c));
  std::ostringstream pe, ops, trace, metrics;
  write_json(pe, r.pe, r.M, c.L, c.T);
  write_operators_csv(ops, r);
  write_trace_csv(trace, r.loop.trace);
  write_metrics(metrics, c, r);
  detail::write_file(dir / "pe_report.json", pe.str());
  detail::write_file(dir / "operators.csv", ops.str());
  detail::write_file(dir / "trace.csv", trace.str());
  detail::write_file(dir / "metrics.txt", metrics.str());
}

inline void write_metrics_table(std::ostream& os, const std::vector<PipelineResult>& results) {
  os << "M,diverged,rms_after_transient,max_abs_after_transient,rms_noiseless_after_transient,"
        "max_abs_noiseless_after_transient,reference_peak_to_peak\n";
  for (const auto& r : results) {
    os << r.M << ',' << (r.loop.ok() ? 0 : 1) << ',' << format_real(r.metrics.after_transient.rms) << ','
       << format_real(r.metrics.after_transient.max_abs) << ',' << format_real(r.metrics.noiseless_after_transient.rms)
       << ',' << format_real(r.metrics.noiseless_after_transient.max_abs) << ','
       << format_real(r.metrics.reference_peak_to_peak) << '\n';
  }
}

struct ExperimentRun {
  ExperimentConfig config;
  CollectedData data;
  std::vector<PipelineResult> results;  // ordered as config.M_values
};

/// Collects once and runs the pipeline for every M; sweeps run concurrently.
inline ExperimentRun run_experiment(const ExperimentConfig& c) {
  ExperimentRun run{c, collect_data(c), {}};
  if (c.M_values.size() == 1) {
    run.results.push_back(run_pipeline(c, run.data, c.M_values.front()));
    return run;
  }
  std::vector<std::future<PipelineResult>> jobs;
  for (std::size_t M : c.M_values)
    jobs.push_back(std::async(std::launch::async, [&run, &c, M] { return run_pipeline(c, run.data, M); }));
  for (auto& j : jobs) run.results.push_back(j.get());
  return run;
}

/// Single-M runs write the bundle into `dir`; sweeps use dir/M<m>/ plus metrics_table.csv.
inline void write_run(const std::filesystem::path& dir, const ExperimentRun& run) {
  detail::make_dir(dir);
  if (run.results.size() == 1) {
    write_bundle(dir, run.config, run.results.front());
    return;
  }
  for (const auto& r : run.results) write_bundle(dir / ("M" + std::to_string(r.M)), run.config, r);
  std::ostringstream table;
  write_metrics_table(table, run.results);
  detail::write_file(dir / "metrics_table.csv", table.str());
  detail::write_file(dir / "config.echo", echo_config(run.config));
}

}  // namespace dvsimc
