// Command-line front end.
//
//   spimex [global flags] converge --model crime|epidemic --mode spatial|temporal
//   spimex [global flags] crime | epidemic | ode-ref | print-config
//
// Exit codes: 0 success, 1 other failure, 2 invariant violation,
// 3 divergence of an uncorrected run, 4 configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spimex/harness/config.hpp"
#include "spimex/harness/convergence.hpp"
#include "spimex/harness/experiments.hpp"
#include "spimex/harness/export.hpp"

using namespace spimex;
using namespace spimex::harness;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kInvariant = 2, kDiverged = 3, kConfig = 4 };

void log_line(const std::string& msg) { std::cerr << "spimex: " << msg << std::endl; }

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void print_table(const ConvergenceTable& t) {
  const bool spatial = t.mode == StudyMode::Spatial;
  std::printf("%-12s %-14s %-8s %-14s %-8s\n", spatial ? "h" : "tau", "err_phi", "order", "err_p", "order");
  for (const auto& r : t.rows) {
    auto order = [](const std::optional<double>& o) { return o ? fmt("%.4f", *o) : std::string("-"); };
    std::printf("%-12.6g %-14.4e %-8s %-14.4e %-8s\n", r.resolution, r.err_density, order(r.order_density).c_str(),
                r.err_field, order(r.order_field).c_str());
  }
  const auto& a = t.audit;
  std::printf("audit: %ld steps, max H1 Newton %d (residual %.2e), max scalar Newton %d, max mass drift %.2e\n",
              a.steps, a.max_h1_newton, a.max_h1_residual, a.max_scalar_newton, a.max_mass_drift);
}

int report_sweep(const SweepReport& report) {
  for (const auto& c : report.cells) {
    std::printf("D=%-10g eta=%-10g steps=%-8ld t=%-10g %s\n", c.D, c.eta, c.steps, c.final_time,
                c.diverged ? ("diverged: " + *c.diverged).c_str() : "completed");
  }
  return report.any_diverged() ? kDiverged : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-preserving IMEX solver for chemotaxis systems with singular sensitivity"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  bool uncorrected = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed of the perturbation generator");
  app.add_option("--out", out, "output directory");
  app.add_flag("--uncorrected", uncorrected, "skip the projection step (predictor only)");
  app.add_option("--threads", threads, "worker threads for parameter sweeps")->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "override a key, e.g. --set crime.n=128 (repeatable)");

  std::string model = "crime", mode = "spatial";
  auto* converge = app.add_subcommand("converge", "grid or time-step convergence study");
  converge->add_option("--model", model, "crime or epidemic")->check(CLI::IsMember({"crime", "epidemic"}));
  converge->add_option("--mode", mode, "spatial or temporal")->check(CLI::IsMember({"spatial", "temporal"}));
  auto* crime_cmd = app.add_subcommand("crime", "crime hotspot sweep over crime.D x crime.eta");
  auto* epidemic_cmd = app.add_subcommand("epidemic", "epidemic sweep over epidemic.D x epidemic.eta_field");
  auto* ode_cmd = app.add_subcommand("ode-ref", "homogeneous epidemic reference trajectory");
  auto* print_cmd = app.add_subcommand("print-config", "print every key with its resolved value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      assign(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.run.seed = *seed;
    if (out) cfg.run.out = *out;
    if (threads) cfg.run.threads = *threads;
    if (uncorrected) cfg.run.uncorrected = true;
    if (converge->parsed()) {
      assign(cfg, "converge.model", model);
      assign(cfg, "converge.mode", mode);
    }
    cfg.validate();

    if (print_cmd->parsed()) {
      for (const auto& [key, value] : describe(cfg)) std::printf("%s = %s\n", key.c_str(), value.c_str());
      return kOk;
    }
    if (converge->parsed()) {
      const ConvergenceTable table = run_convergence(cfg, log_line);
      const auto path = std::filesystem::path(cfg.run.out) / "converge" / (model + "-" + mode + ".csv");
      export_csv(convergence_series(table, cfg), path);
      print_table(table);
      log_line("table written to " + path.string());
      return kOk;
    }
    if (crime_cmd->parsed()) return report_sweep(run_crime(cfg, log_line));
    if (epidemic_cmd->parsed()) return report_sweep(run_epidemic(cfg, log_line));
    if (ode_cmd->parsed()) {
      run_ode_reference(cfg, log_line);
      return kOk;
    }
  } catch (const ConfigError& e) {
    log_line(std::string("configuration error: ") + e.what());
    return kConfig;
  } catch (const InvariantViolation& e) {
    log_line(std::string("invariant violation: ") + e.what());
    return kInvariant;
  } catch (const Diverged& e) {
    log_line(std::string("diverged: ") + e.what());
    return kDiverged;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return kFailure;
  }
  return kFailure;
}
