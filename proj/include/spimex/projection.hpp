#pragma once

#include <optional>
#include <span>
#include <vector>

#include "spimex/grid.hpp"
#include "spimex/linsolve.hpp"

namespace spimex {

struct ProjectionConfig {
  /// ||F(U)|| <= h1_tol * ||(I - Lap_h) p_tilde|| ends the field Newton iteration.
  double h1_tol = 1e-10;
  int h1_max_iter = 50;
  /// Inner Jacobian solves run tighter than the outer Newton target.
  KrylovConfig krylov{1e-12, 200, 50};
  /// |F(xi)| <= mass_tol * target ends the scalar Newton iteration.
  double mass_tol = 1e-12;
  int scalar_max_iter = 50;
  int bisection_max_iter = 400;
};

/// Corrected fields together with the multipliers that certify them.
struct ProjectionOutcome {
  std::vector<GridField> corrected;
  /// One positivity multiplier per L2-projected field.
  std::vector<GridField> multiplier_lambda;
  /// Mass multiplier; zero unless a mass constraint is active.
  double multiplier_xi = 0.0;
  /// Positivity multiplier of the H1-projected field, if any.
  std::optional<GridField> multiplier_zeta;
  int newton_iterations = 0;         // field (H1) semi-smooth Newton
  int scalar_newton_iterations = 0;  // mass multiplier
  int krylov_iterations = 0;
  bool used_bisection = false;
  double h1_residual = 0.0;
  /// max(0, -min u_tilde) over all constrained inputs.
  double max_constraint_violation_before = 0.0;
};

/// L2 projection onto {u >= 0}: u = max(u_tilde, 0), lambda = u - u_tilde.
ProjectionOutcome clip_positive_l2(const GridField& u_tilde);

/// H1 projection onto {p >= 0} by semi-smooth Newton on
/// F(U) = -Lap_h U^+ + U - (I - Lap_h) p_tilde, p = U^+, zeta = U^-.
/// Throws NewtonStall after cfg.h1_max_iter iterations.
ProjectionOutcome project_h1_positive(const GridField& p_tilde, const SpectralPlan& plan,
                                      const ProjectionConfig& cfg = {});

/// L2 projection of several fields onto {psi_k >= 0, sum_k mass(psi_k) = target}:
/// psi_k = max(psi_tilde_k - xi, 0) with xi the root of the monotone
/// piecewise-linear mass defect. Newton starts at xi = 0; a vanishing
/// generalised derivative or a stall falls back to bisection.
ProjectionOutcome project_l2_mass_positive(std::span<const GridField> psi_tilde, double target_mass,
                                           const ProjectionConfig& cfg = {});

/// F(xi) = h^2 sum_k sum_ij (psi_tilde_k - xi)^+ - target.
double mass_defect(std::span<const GridField> psi_tilde, double xi, double target_mass);

}  // namespace spimex
