#pragma once

// Two-field SPIMEX stepper for
//
//   phi_t = c div( grad phi - f phi grad log(p + p0) ) + f_phi(phi, p)
//   p_t   = eta D Lap p + f_p(phi, p)
//
// with c = chem_prefactor and f = flux_factor. Crank-Nicolson treats the
// linear diffusion, second-order Adams-Bashforth extrapolates the flux and
// the reactions, and the predictor is corrected by an L2 clip on phi and an
// H1 positivity projection on p.

#include <memory>
#include <optional>
#include <variant>

#include "spimex/grid.hpp"
#include "spimex/linsolve.hpp"
#include "spimex/projection.hpp"

namespace spimex::crime {

/// phi_t = ... - (p+p0) phi,  p_t = ... + (p+p0) phi - p.
struct GeneralForm {};

/// rho_t = ... - rho (A+A0) + gamma,  A_t = ... - omega A + kappa rho (A+A0).
struct CrimeForm {
  double gamma = 0.019;
  double omega = 1.0 / 15.0;
  double kappa = 0.56;
};

using Reaction = std::variant<GeneralForm, CrimeForm>;

struct CrimeParams {
  double D = 0.1;
  double eta = 1.0;
  GridField p0;
  double chem_prefactor = 0.025;
  double flux_factor = 2.0;
  Reaction reaction = GeneralForm{};

  /// chem_prefactor = D/4.
  static CrimeParams general(double D, double eta, GridField p0);
  /// chem_prefactor = D; p0 plays the role of A0.
  static CrimeParams crime(double D, double eta, GridField A0, CrimeForm form);

  /// Throws std::invalid_argument unless D > 0, eta > 0 and min p0 > 0.
  void validate() const;
};

struct FieldPair {
  GridField phi;
  GridField p;
};

struct CrimeState {
  GridField phi;
  GridField p;
  double time = 0.0;
  long step = 0;
  std::optional<FieldPair> prev;
  /// Explicit terms already evaluated at `prev`, if the stepper kept them.
  /// Left empty, they are recomputed; when set they must belong to `prev`.
  std::shared_ptr<const FieldPair> prev_terms;
};

/// Spatially homogeneous fixed point of the crime form.
FieldPair crime_equilibrium(const GridSpec& spec, double A0, const CrimeForm& form);

/// Pointwise non-diffusive right-hand sides.
FieldPair reaction_terms(const GridField& phi, const GridField& p, const CrimeParams& params);

/// First-order start: CN diffusion, explicit flux and reaction at t_k.
FieldPair predict_first(const CrimeState& state, const CrimeParams& params, double tau,
                        const SpectralPlan& plan);

/// CN diffusion with AB2 (3/2, -1/2) flux and reaction. Requires state.prev.
FieldPair predict_ab2(const CrimeState& state, const CrimeParams& params, double tau,
                      const SpectralPlan& plan);

struct StepResult {
  CrimeState state;
  /// corrected = {phi, p}; lambda = {lambda_phi}; zeta = H1 multiplier of p.
  ProjectionOutcome projection;
};

/// Predictor (first-order if no history, else AB2) followed by the L2-H1 correction.
StepResult step(const CrimeState& state, const CrimeParams& params, double tau,
                const SpectralPlan& plan, const ProjectionConfig& cfg = {});

/// Integrates [t, t + tau] with `substeps` corrected first-order steps and
/// returns the state at t + tau whose history is the input state.
StepResult advance_first_interval(const CrimeState& state, const CrimeParams& params, double tau,
                                  int substeps, const SpectralPlan& plan,
                                  const ProjectionConfig& cfg = {});

struct UncorrectedResult {
  CrimeState state;
  double min_phi = 0.0;
  double min_p = 0.0;
};

/// Predictor only. Throws Diverged once a value is non-finite, exceeds
/// `blowup_threshold` in magnitude, or p + p0 leaves the positive range.
UncorrectedResult step_uncorrected(const CrimeState& state, const CrimeParams& params, double tau,
                                   const SpectralPlan& plan, double blowup_threshold = 1e6);

}  // namespace spimex::crime
