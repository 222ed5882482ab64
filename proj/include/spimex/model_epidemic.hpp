#pragma once

// Nine-field SPIMEX stepper for the chemotaxis epidemic system: eight
// compartments psi = (S, E, P, A, I-, I+, H, R) and the attractiveness p.
// The seven mobile compartments share the chemotaxis operator with
// prefactor D/4; H is immobile and only exchanges mass with I+ and R.

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "spimex/grid.hpp"
#include "spimex/linsolve.hpp"
#include "spimex/projection.hpp"

namespace spimex::epidemic {

/// Storage order of all compartment arrays and of every exported column.
enum Compartment : int { S = 0, E, P, A, Im, Ip, H, R };
inline constexpr int kCompartments = 8;
inline constexpr int kMobile = 7;
inline constexpr std::array<const char*, kCompartments> kCompartmentNames = {"S",  "E",  "P", "A",
                                                                            "Im", "Ip", "H", "R"};

/// Mobile slots, i.e. Psi without H.
enum MobileSlot : int { mS = 0, mE, mP, mA, mIm, mIp, mR };
inline constexpr std::array<int, kMobile> kMobileCompartment = {S, E, P, A, Im, Ip, R};

using Compartments = std::array<GridField, kCompartments>;
using MobileFields = std::array<GridField, kMobile>;

struct EpidemicParams {
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
  double D = 0.01;
  double eta_field = 1.0;
  GridField p0;

  /// Published rates with environmental floor p0 = 1/30.
  static EpidemicParams published(const GridSpec& spec, double D, double eta_field);
  /// Every rate and probability set to `value` (convergence studies).
  static EpidemicParams uniform_rates(const GridSpec& spec, double value, double D, double eta_field);

  void validate() const;
};

/// 7x7 matrix of the linear exchange in mobile-slot order.
Eigen::Matrix<double, kMobile, kMobile> linear_matrix(const EpidemicParams& params);

struct History {
  Compartments psi;
  GridField p;
};

/// Everything the predictor treats explicitly at one time level: flux,
/// linear and nonlinear exchange of the mobile slots, the H balance and the
/// source of p.
struct ExplicitTerms {
  MobileFields mobile;
  GridField hospitalized;
  GridField field;
};

struct EpidemicState {
  Compartments psi;
  GridField p;
  double time = 0.0;
  long step = 0;
  double mass0 = 0.0;
  std::optional<History> prev;
  /// Explicit terms already evaluated at `prev`, if the stepper kept them.
  /// Left empty, they are recomputed; when set they must belong to `prev`.
  std::shared_ptr<const ExplicitTerms> prev_terms;

  /// Builds a state at t = 0 and fixes mass0 from the same quadrature used later.
  static EpidemicState initial(Compartments psi, GridField p);
};

double total_compartment_mass(const Compartments& psi);

MobileFields mobile_of(const Compartments& psi);

/// L applied pointwise to (S, E, P, A, I-, I+, R).
MobileFields apply_linear_part(const MobileFields& phi, const EpidemicParams& params);

/// (-F, +F, 0, 0, 0, 0, delta_H H) with F = lambda (beta (P+A) + I- + I+) S.
MobileFields apply_nonlinear_part(const MobileFields& phi, const GridField& hospitalized,
                                  const EpidemicParams& params);

struct Prediction {
  Compartments psi;
  GridField p;
};

Prediction predict_first_epi(const EpidemicState& state, const EpidemicParams& params, double tau,
                             const SpectralPlan& plan);
Prediction predict_ab2_epi(const EpidemicState& state, const EpidemicParams& params, double tau,
                           const SpectralPlan& plan);

struct StepResult {
  EpidemicState state;
  /// corrected = 8 compartments then p; lambda per compartment; xi; zeta of p.
  ProjectionOutcome projection;
  double min_before = 0.0;
};

/// Predictor followed by the mass-conserving L2 projection of Psi and the
/// H1 positivity projection of p. Throws InvariantViolation if the mass
/// multiplier turns negative or the corrected state breaks positivity or mass.
StepResult step_epi(const EpidemicState& state, const EpidemicParams& params, double tau,
                    const SpectralPlan& plan, const ProjectionConfig& cfg = {});

StepResult advance_first_interval(const EpidemicState& state, const EpidemicParams& params, double tau,
                                  int substeps, const SpectralPlan& plan, const ProjectionConfig& cfg = {});

struct UncorrectedResult {
  EpidemicState state;
  double min_value = 0.0;
};

/// Predictor only; throws Diverged on non-finite values, |u| > threshold, or p + p0 <= 0.
UncorrectedResult step_epi_uncorrected(const EpidemicState& state, const EpidemicParams& params, double tau,
                                       const SpectralPlan& plan, double blowup_threshold = 1e6);

/// total_mass(E + P + A + I- + I+), divided by mass0 when `renormalize`.
double virus_carriers(const EpidemicState& state, bool renormalize = false);

// ---------------------------------------------------------------------------
// Spatially homogeneous reference model

using OdeVector = std::array<double, kCompartments>;

enum class OdeMethod {
  /// Same two-step update the PDE uses (Euler start, AB2 afterwards).
  AdamsBashforth2,
  RungeKutta4,
};

struct OdeOptions {
  double tau = 0.1;
  double T = 1.0;
  double sample_interval = 0.1;
  OdeMethod method = OdeMethod::AdamsBashforth2;
  int first_step_substeps = 1;
};

struct OdeSample {
  double time = 0.0;
  OdeVector y{};
};

OdeVector ode_rhs(const OdeVector& y, const EpidemicParams& params);

std::vector<OdeSample> ode_reference(const OdeVector& y0, const EpidemicParams& params,
                                     const OdeOptions& options);

}  // namespace spimex::epidemic
