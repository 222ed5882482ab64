#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spimex/harness/audit.hpp"
#include "spimex/harness/config.hpp"
#include "spimex/harness/export.hpp"

namespace spimex::harness {

/// End state of a smooth-data run: the constrained densities (one field for
/// the crime model, eight compartments for the epidemic model) and p.
struct FinalState {
  std::vector<GridField> densities;
  GridField field;
};

using Logger = std::function<void(const std::string&)>;

/// round(T / tau); throws ConfigError unless T is a whole number of steps.
long step_count(double T, double tau);

/// Integrates the smooth initial data of the selected model on an n x n unit
/// grid to time T: one substepped first-order interval, then AB2 steps.
/// Every corrected step passes through `auditor` when given.
FinalState simulate_smooth(Model model, const ConvergeSection& cv, int n, double tau, double T,
                           Auditor* auditor = nullptr);

/// Samples `fine` at the nodes of `coarse`. Throws NonNestedGrids unless the
/// fine resolution is an integer multiple of the coarse one on the same domain.
GridField restrict_to(const GridField& fine, const GridSpec& coarse);

struct ConvergenceRow {
  double resolution = 0.0;  // h for spatial studies, tau for temporal ones
  double err_density = 0.0;  // L2, Euclidean over all density fields
  double err_field = 0.0;    // H1
  std::optional<double> order_density;
  std::optional<double> order_field;
};

struct ConvergenceTable {
  Model model = Model::Crime;
  StudyMode mode = StudyMode::Spatial;
  std::vector<ConvergenceRow> rows;
  bool reference_from_cache = false;
  AuditSummary audit;
};

/// log2 of successive error ratios; the first row carries no order.
void fill_orders(ConvergenceTable& table);

/// Runs the study selected by cfg.converge.{model, mode}.
ConvergenceTable run_convergence(const ExperimentConfig& cfg, const Logger& log = {});

/// Columns (h_or_tau, err_phi, order_phi, err_p, order_p); missing orders are NaN.
Series convergence_series(const ConvergenceTable& table, const ExperimentConfig& cfg);

/// Reference cache files: magic line, field count, n, then raw doubles.
void save_reference(const FinalState& s, const std::filesystem::path& path);
std::optional<FinalState> load_reference(const std::filesystem::path& path, const GridSpec& spec, std::size_t densities);

}  // namespace spimex::harness
