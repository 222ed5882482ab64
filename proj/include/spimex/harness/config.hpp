#pragma once

// Experiment configuration: a line-oriented `key = value` file with one
// section per experiment family.
//
//   [run]       seed, out, threads, uncorrected
//   [crime]     crime pattern runs (grid, time, rates, sweep lists, perturbation)
//   [epidemic]  epidemic runs and the blow-up demonstration
//   [converge]  convergence studies for either model
//
// Lists are comma separated. `#` and `;` start comments. Unknown sections or
// keys raise ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spimex/errors.hpp"

namespace spimex::harness {

enum class Model { Crime, Epidemic };
enum class StudyMode { Spatial, Temporal };

struct RunSection {
  std::uint64_t seed = 20240917;
  std::string out = "spimex-out";
  int threads = 1;
  bool uncorrected = false;
};

struct PerturbationSection {
  int count = 30;
  double height_scale = 0.02;
  double width_scale = 0.005;
  int images = 1;
};

struct CrimeSection {
  int n = 256;
  double lo = 0.0;
  double hi = 6.283185307179586;
  double tau = 0.01;
  double T = 800.0;
  std::vector<double> D = {0.001, 0.01, 0.1, 1.0};
  std::vector<double> eta = {0.2, 0.03};
  double A0 = 1.0 / 30.0;
  double gamma = 0.019;
  double omega = 1.0 / 15.0;
  double kappa = 0.56;
  bool perturb = true;
  PerturbationSection perturbation{};
  int first_step_substeps = 1;
  std::vector<double> snapshot_times = {800.0};
  int sample_every = 100;
  double blowup_threshold = 1e6;
};

struct EpidemicSection {
  int n = 128;
  double lo = 0.0;
  double hi = 1.0;
  double tau = 0.1;
  double T = 300.0;
  std::vector<double> D = {0.00035};
  std::vector<double> eta_field = {0.03125};
  double lambda_inf = 1.018;
  double beta = 1.0;
  double eta_lat = 1.0 / 1.2;
  double eta_prime = 1.0 / 1.8;
  double rho_sym = 0.745;
  double p_H = 0.0272;
  double delta_I_plus = 1.0 / 3.8;
  double delta_I_minus = 1.0 / 7.5;
  double delta_A = 1.0 / 7.5;
  double delta_H = 1.0 / 6.0;
  double delta_R = 1.0 / 268.0;
  double delta_P_plus = 0.3;
  double delta_P_minus = 0.36;
  double p_min = 1.0 / 30.0;
  /// "example" (seeded Gaussian seeds) or "uniform" (spatially constant seed).
  std::string ic = "example";
  /// Spatially constant infected fraction for ic = uniform, split over E..I+.
  double uniform_seed = 0.001;
  PerturbationSection perturbation{30, 0.001, 0.01, 20};
  int first_step_substeps = 1;
  std::vector<double> snapshot_times = {80.0, 300.0};
  int sample_every = 10;
  bool renormalize = true;
  /// "ab2" or "rk4" for the homogeneous reference overlay and `ode-ref`.
  std::string ode_method = "ab2";
  double blowup_threshold = 1e6;
};

struct ConvergeSection {
  Model model = Model::Crime;
  StudyMode mode = StudyMode::Spatial;
  std::vector<int> resolutions = {8, 16, 32, 64, 128};
  int reference_n = 512;
  double tau = 1e-4;
  double T = 0.1;
  int temporal_n = 128;
  std::vector<double> taus = {2e-3, 1e-3, 5e-4, 2.5e-4, 1.25e-4};
  double tau_ref = 1e-5;
  double temporal_T = 0.2;
  int first_step_substeps = 100;
  double D_crime = 0.1;
  double D_epidemic = 0.01;
  double eta = 1.0;
  double p0 = 1.0 / 30.0;
  double rate = 0.5;
  /// Directory for cached reference solutions; empty disables caching.
  std::string cache_dir = "spimex-cache";
};

struct ExperimentConfig {
  RunSection run;
  CrimeSection crime;
  EpidemicSection epidemic;
  ConvergeSection converge;

  /// Throws ConfigError on any violated invariant (tau > 0, T >= tau, ...).
  void validate() const;
};

/// Parses config text on top of the defaults. `origin` names the source in messages.
ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies a single `section.key = value` assignment; used by the parser and CLI overrides.
void assign(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value);

/// All keys in canonical order together with their current values.
std::vector<std::pair<std::string, std::string>> describe(const ExperimentConfig& cfg);

/// FNV-1a 64-bit hash as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

/// Hash of the canonical description of `cfg` restricted to keys starting with `prefix`.
std::string config_hash(const ExperimentConfig& cfg, std::string_view prefix = "");

}  // namespace spimex::harness
