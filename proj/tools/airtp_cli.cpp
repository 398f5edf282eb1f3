// Command-line front end. Exit codes: 0 success, 1 configuration or usage
// error, 2 runtime infeasibility, 3 any other failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "airtp/config.hpp"
#include "airtp/harness.hpp"
#include "airtp/long_term.hpp"
#include "airtp/short_term.hpp"

namespace {

using namespace airtp;

enum Exit { kOk = 0, kConfig = 1, kInfeasible = 2, kFailure = 3 };

ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  ExperimentConfig c = load_config(path);
  if (seed) c.seed = *seed;
  return c;
}

int cmd_run(const std::string& path, const std::optional<std::uint64_t>& seed, const std::string& out) {
  const ExperimentConfig c = load(path, seed);
  c.check_feasible();
  const ExperimentReport report = run_sweep(c);
  write_report(report, out);
  std::size_t failed = 0;
  for (const auto& cell : report.cells) failed += cell.ok ? 0 : 1;
  std::printf("wrote %s/report.json, sweep.csv, sca_trace.csv (%zu cells, %zu failed)\n", out.c_str(),
              report.cells.size(), failed);
  return kOk;
}

int cmd_validate(const std::string& path) {
  const ExperimentConfig c = load(path, std::nullopt);
  c.check_feasible();
  std::printf("config ok\n");
  return kOk;
}

int cmd_solve_short(const std::string& path, const std::optional<std::uint64_t>& seed) {
  const ExperimentConfig c = load(path, seed);
  const std::size_t n = c.channel.n_devices;
  const EnergyModel energy = c.energy.for_devices(n);
  const std::vector<double> m(n, 1.0 / static_cast<double>(n));
  const ChannelSet channels = sample_channels(c.channel, c.seed);
  const ShortTermResult r = solve_short_term(channels, m, energy, c.short_term, c.seed);
  std::printf("alpha %.17g\n", r.solution.alpha);
  std::printf("alpha_lb %.17g\n", r.solution.alpha_lb);
  std::printf("mse %.17g\n", mse_closed_form(r.design, channels, c.channel.noise_power));
  const std::vector<double> e = device_energies(r.design, m, energy);
  for (std::size_t k = 0; k < n; ++k)
    std::printf("energy[%zu] %.17g of %.17g\n", k, e[k], energy.power_budgets[k]);
  return kOk;
}

int cmd_assign(const std::string& path, const std::optional<std::uint64_t>& seed, const std::string& trace) {
  const ExperimentConfig c = load(path, seed);
  c.check_feasible();
  const EnergyModel energy = c.energy.for_devices(c.channel.n_devices);
  LongTermOptions options = c.long_term;
  options.short_term = c.short_term;
  const LongTermResult r = run_long_term(c.channel, energy, options, c.seed);
  std::printf("m");
  for (double v : r.m) std::printf(" %.12g", v);
  std::printf("\niterations %zu converged %s skipped %zu\n", r.trace.size(), r.converged ? "yes" : "no",
              r.skipped_samples);
  std::ofstream f(trace, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + trace);
  f << trace_csv(r, c.channel.n_devices);
  std::printf("trace written to %s\n", trace.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Over-the-air all-reduce workbench for tensor-parallel inference"};
  app.require_subcommand(1);

  std::string config;
  std::string out = "out";
  std::string trace = "sca_trace.csv";
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "full sweep; writes report.json, sweep.csv, sca_trace.csv");
  run->add_option("--config", config, "experiment config (JSON)")->required();
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--seed", seed, "override the config seed");

  auto* validate = app.add_subcommand("validate", "schema and feasibility check, no compute");
  validate->add_option("--config", config, "experiment config (JSON)")->required();

  auto* solve = app.add_subcommand("solve-short", "one short-term solve at the uniform assignment");
  solve->add_option("--config", config, "experiment config (JSON)")->required();
  solve->add_option("--seed", seed, "channel and randomisation seed (default: config seed)");

  auto* assign = app.add_subcommand("assign", "long-term model assignment only");
  assign->add_option("--config", config, "experiment config (JSON)")->required();
  assign->add_option("--seed", seed, "override the config seed");
  assign->add_option("--trace", trace, "trace CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kConfig;
  }

  try {
    if (*run) return cmd_run(config, seed, out);
    if (*validate) return cmd_validate(config);
    if (*solve) return cmd_solve_short(config, seed);
    if (*assign) return cmd_assign(config, seed, trace);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kConfig;
}
