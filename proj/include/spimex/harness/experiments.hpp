#pragma once

// Drivers for the pattern-formation runs. Every sweep cell writes into its
// own directory below the configured output root:
//
//   <out>/crime/D<D>_eta<eta>/series.csv, rho_t<t>.pgm, A_t<t>.pgm
//   <out>/epidemic/D<D>_eta<eta>/series.csv, mobile_t<t>.pgm, p_t<t>.pgm
//   <out>/ode/reference.csv
//
// Uncorrected runs that diverge keep the series up to the last valid step
// and write *_last_valid.pgm snapshots of that state.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spimex/harness/audit.hpp"
#include "spimex/harness/config.hpp"
#include "spimex/harness/convergence.hpp"

namespace spimex::harness {

struct CellOutcome {
  double D = 0.0;
  double eta = 0.0;
  std::filesystem::path dir;
  long steps = 0;
  double final_time = 0.0;
  /// Set when an uncorrected run raised Diverged; holds its message.
  std::optional<std::string> diverged;
  double diverged_time = 0.0;
  AuditSummary audit;
};

struct SweepReport {
  std::vector<CellOutcome> cells;

  bool any_diverged() const;
};

/// One crime cell. Corrected runs audit every step and rethrow
/// InvariantViolation after writing the partial series.
CellOutcome run_crime_cell(const ExperimentConfig& cfg, double D, double eta, const Logger& log = {});
CellOutcome run_epidemic_cell(const ExperimentConfig& cfg, double D, double eta_field, const Logger& log = {});

/// The full D x eta sweep, distributed over run.threads workers. The first
/// exception raised by any cell is rethrown once all workers have stopped.
SweepReport run_crime(const ExperimentConfig& cfg, const Logger& log = {});
SweepReport run_epidemic(const ExperimentConfig& cfg, const Logger& log = {});

/// Homogeneous model from the spatial mean of the configured initial state
/// (first entries of the epidemic D and eta lists). Returns the CSV path.
std::filesystem::path run_ode_reference(const ExperimentConfig& cfg, const Logger& log = {});

/// Epidemic parameters of [epidemic] for one sweep cell.
epidemic::EpidemicParams epidemic_params(const ExperimentConfig& cfg, const GridSpec& spec, double D,
                                         double eta_field);

/// Initial state selected by epidemic.ic, drawn from run.seed.
epidemic::EpidemicState epidemic_initial_state(const ExperimentConfig& cfg, const GridSpec& spec,
                                               const epidemic::EpidemicParams& params);

/// Crime equilibrium plus the seeded perturbation (none if crime.perturb is false).
crime::CrimeState crime_initial_state(const ExperimentConfig& cfg, const GridSpec& spec);

}  // namespace spimex::harness
