// Command-line harness: data collection, PE check, closed-loop runs and the
// two built-in examples.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dvsimc/experiment.hpp"

namespace fs = std::filesystem;
using namespace dvsimc;

namespace {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_not_pe = 2,
  exit_inverse = 3,
  exit_divergence = 4,
  exit_io = 5,
  exit_failure = 6,
};

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::not_persistently_exciting: return exit_not_pe;
    case ErrorKind::inverse_unavailable: return exit_inverse;
    case ErrorKind::closure_divergence:
    case ErrorKind::instability: return exit_divergence;
    case ErrorKind::io: return exit_io;
    case ErrorKind::config:
    case ErrorKind::invalid_input: return exit_usage;
    default: return exit_failure;
  }
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "config file (section.key = value)");
  cmd->add_option("-s,--set", c.overrides, "override a config key, e.g. --set excitation.T=300")->take_all();
}

ExperimentConfig load_config(const Common& c, const std::string& preset = "") {
  KeyValueFile kv;
  if (!c.config_path.empty()) {
    std::ifstream is(c.config_path);
    if (!is) fail(ErrorKind::io, "cannot open config file '" + c.config_path + "'");
    kv = KeyValueFile::parse(is, c.config_path);
  }
  if (!preset.empty()) kv.set("experiment.preset", preset);
  for (const std::string& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::config, "--set expects key=value, got '" + o + "'");
    std::istringstream line(o);
    const KeyValueFile one = KeyValueFile::parse(line, "--set");
    for (const auto& [k, v] : one.entries()) kv.set(k, v);
  }
  return config_from_keys(kv);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) fail(ErrorKind::config, what + " file not given");
  if (!fs::is_regular_file(path)) fail(ErrorKind::io, what + " file '" + path + "' does not exist");
}

CollectedData load_data(const std::string& u_path, const std::string& y_path) {
  require_file(u_path, "input data");
  require_file(y_path, "output data");
  CollectedData d;
  d.u = read_signal_csv(u_path);
  d.y = read_signal_csv(y_path);
  return d;
}

void print_summary(const ExperimentRun& run) {
  for (const PipelineResult& r : run.results) {
    std::cout << run.config.name << " M=" << r.M << " rank " << r.pe.achieved_rank << "/" << r.pe.required_rank
              << (r.loop.ok() ? "" : " DIVERGED") << " rms " << format_real(r.metrics.after_transient.rms) << " max "
              << format_real(r.metrics.after_transient.max_abs) << '\n';
    for (const auto& w : r.warnings) std::cerr << "warning (M=" << r.M << "): " << w << '\n';
    if (r.loop.failure) std::cerr << "error (M=" << r.M << "): " << r.loop.failure->what() << '\n';
  }
}

int loop_status(const ExperimentRun& run) {
  for (const PipelineResult& r : run.results)
    if (r.loop.failure) return exit_code_for(r.loop.failure->kind());
  return exit_ok;
}

int cmd_collect(const Common& c, const std::string& out) {
  const ExperimentConfig cfg = load_config(c);
  const CollectedData data = collect_data(cfg);
  const fs::path dir(out);
  detail::make_dir(dir);
  write_signal_csv((dir / "u.csv").string(), data.u);
  write_signal_csv((dir / "y.csv").string(), data.y);
  detail::write_file(dir / "config.echo", echo_config(cfg));
  std::cout << "wrote " << data.u.size() << " input and " << data.y.size() << " output samples to " << out << '\n';
  return exit_ok;
}

int cmd_pe_check(const Common& c, const std::string& u_path, const std::string& y_path, const std::string& out,
                 long long M_override, long long L_override) {
  const ExperimentConfig cfg = load_config(c);
  const CollectedData data = load_data(u_path, y_path);
  const std::size_t M = M_override >= 0 ? static_cast<std::size_t>(M_override) : cfg.max_M();
  const std::size_t L = L_override > 0 ? static_cast<std::size_t>(L_override) : cfg.L;
  const DataDictionary d = build_dictionary(data.u, data.y, M, L);
  const PersistenceReport p = pe_check(d, cfg.rep.rank_tolerance);
  std::ostringstream json;
  write_json(json, p, M, L, d.T);
  if (out.empty()) {
    std::cout << json.str();
  } else {
    detail::write_file(out, json.str());
  }
  std::cerr << (p.is_pe ? "persistently exciting" : describe_failure(p)) << '\n';
  return p.is_pe ? exit_ok : exit_not_pe;
}

int cmd_imc_run(const Common& c, const std::string& u_path, const std::string& y_path, const std::string& out) {
  const ExperimentConfig cfg = load_config(c);
  const CollectedData data = load_data(u_path, y_path);
  if (data.y.start_index() != 0 || data.y.size() < cfg.T)
    fail(ErrorKind::invalid_input, "output data must cover [0, " + std::to_string(cfg.T - 1) + "]");
  ExperimentRun run{cfg, data, {}};
  for (std::size_t M : cfg.M_values) run.results.push_back(run_pipeline(cfg, data, M));
  write_run(out, run);
  print_summary(run);
  return loop_status(run);
}

int cmd_example(const std::string& preset, const Common& c, const std::string& out) {
  const ExperimentConfig cfg = load_config(c, preset);
  const ExperimentRun run = run_experiment(cfg);
  write_run(out, run);
  print_summary(run);
  return loop_status(run);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven representation and internal model control of second-order Volterra systems"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  std::string out, u_path, y_path;
  long long M_override = -1, L_override = 0;

  auto* collect_cmd = app.add_subcommand("collect", "excite the configured plant and write u.csv / y.csv");
  add_common(collect_cmd, common);
  collect_cmd->add_option("-o,--out", out, "output directory")->required();

  auto* pe_cmd = app.add_subcommand("pe-check", "test persistency of excitation of recorded data");
  add_common(pe_cmd, common);
  pe_cmd->add_option("-u,--input", u_path, "input CSV covering [-M, T-1]")->required();
  pe_cmd->add_option("-y,--output", y_path, "output CSV covering [0, T-1]")->required();
  pe_cmd->add_option("-M,--memory", M_override, "memory length (default: largest configured)");
  pe_cmd->add_option("-L,--depth", L_override, "depth (default: configured)");
  pe_cmd->add_option("-o,--out", out, "report file (default: stdout)");

  auto* run_cmd = app.add_subcommand("imc-run", "extract operators from recorded data and run the closed loop");
  add_common(run_cmd, common);
  run_cmd->add_option("-u,--input", u_path, "input CSV")->required();
  run_cmd->add_option("-y,--output", y_path, "output CSV")->required();
  run_cmd->add_option("-o,--out", out, "result directory")->required();

  auto* ex1_cmd = app.add_subcommand("example1", "ideal Volterra plant, M = 5");
  add_common(ex1_cmd, common);
  ex1_cmd->add_option("-o,--out", out, "result directory")->required();

  auto* ex2_cmd = app.add_subcommand("example2", "sampled bilinear plant, M = 3, 4, 5");
  add_common(ex2_cmd, common);
  ex2_cmd->add_option("-o,--out", out, "result directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_usage;
  }

  try {
    if (collect_cmd->parsed()) return cmd_collect(common, out);
    if (pe_cmd->parsed()) return cmd_pe_check(common, u_path, y_path, out, M_override, L_override);
    if (run_cmd->parsed()) return cmd_imc_run(common, u_path, y_path, out);
    if (ex1_cmd->parsed()) return cmd_example("example1", common, out);
    if (ex2_cmd->parsed()) return cmd_example("example2", common, out);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_failure;
  }
  return exit_usage;
}
