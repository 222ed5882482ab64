#include "spimex/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spimex {

namespace {

double violation(const GridField& u) { return std::max(0.0, -u.min()); }

// Generalised derivative: -h^2 * #{ psi_tilde - xi > 0 }.
double mass_derivative(std::span<const GridField> psi_tilde, double xi) {
  double count = 0.0;
  for (const auto& f : psi_tilde) count += static_cast<double>((f.values() > xi).count());
  const double h = psi_tilde.front().spec().h();
  return -h * h * count;
}

}  // namespace

double mass_defect(std::span<const GridField> psi_tilde, double xi, double target_mass) {
  double acc = 0.0;
  for (const auto& f : psi_tilde) acc += (f.values() - xi).max(0.0).sum();
  const double h = psi_tilde.front().spec().h();
  return h * h * acc - target_mass;
}

ProjectionOutcome clip_positive_l2(const GridField& u_tilde) {
  ProjectionOutcome out;
  GridField u(u_tilde.spec(), u_tilde.values().max(0.0));
  GridField lambda(u_tilde.spec(), u.values() - u_tilde.values());
  out.max_constraint_violation_before = violation(u_tilde);
  out.corrected.push_back(std::move(u));
  out.multiplier_lambda.push_back(std::move(lambda));
  return out;
}

ProjectionOutcome project_h1_positive(const GridField& p_tilde, const SpectralPlan& plan,
                                      const ProjectionConfig& cfg) {
  require_same_grid(p_tilde.spec(), plan.spec());
  ProjectionOutcome out;
  out.max_constraint_violation_before = violation(p_tilde);
  if (p_tilde.min() >= 0.0) {
    out.corrected.push_back(p_tilde);
    out.multiplier_zeta = GridField(p_tilde.spec());
    return out;
  }

  const GridField target = apply_shifted_laplacian(1.0, 1.0, p_tilde);
  const double target_norm = l2_norm(target);

  GridField u = p_tilde;
  int iter = 0;
  double residual = 0.0;
  while (true) {
    GridField u_plus(u.spec(), u.values().max(0.0));
    GridField f = laplacian(u_plus);
    f.values() = u.values() - f.values() - target.values();
    residual = l2_norm(f);
    if (residual <= cfg.h1_tol * target_norm) break;
    if (iter >= cfg.h1_max_iter) throw NewtonStall(iter, residual, "H1 positivity projection stalled");

    GridField mask(u.spec(), (u.values() > 0.0).cast<double>());
    f *= -1.0;
    KrylovResult step = solve_masked_jacobian(mask, f, plan, cfg.krylov);
    out.krylov_iterations += step.iterations;
    u += step.solution;
    ++iter;
  }

  out.newton_iterations = iter;
  out.h1_residual = target_norm > 0.0 ? residual / target_norm : residual;
  out.corrected.emplace_back(u.spec(), u.values().max(0.0));
  out.multiplier_zeta = GridField(u.spec(), (-u.values()).max(0.0));
  return out;
}

ProjectionOutcome project_l2_mass_positive(std::span<const GridField> psi_tilde, double target_mass,
                                           const ProjectionConfig& cfg) {
  if (psi_tilde.empty()) throw std::invalid_argument("mass projection needs at least one field");
  if (!(target_mass > 0.0) || !std::isfinite(target_mass)) {
    throw Infeasible("mass projection: target mass must be positive and finite");
  }
  const GridSpec& spec = psi_tilde.front().spec();
  for (const auto& f : psi_tilde) {
    require_same_grid(spec, f.spec());
    if (!f.all_finite()) throw Infeasible("mass projection: non-finite input");
  }

  ProjectionOutcome out;
  for (const auto& f : psi_tilde)
    out.max_constraint_violation_before = std::max(out.max_constraint_violation_before, violation(f));

  const double tol = cfg.mass_tol * target_mass;
  double xi = 0.0;
  double defect = mass_defect(psi_tilde, xi, target_mass);
  bool converged = std::abs(defect) <= tol;
  int iter = 0;
  while (!converged && iter < cfg.scalar_max_iter) {
    const double slope = mass_derivative(psi_tilde, xi);
    if (slope == 0.0) break;
    xi -= defect / slope;
    ++iter;
    defect = mass_defect(psi_tilde, xi, target_mass);
    converged = std::abs(defect) <= tol;
  }
  out.scalar_newton_iterations = iter;

  if (!converged) {
    // F is continuous and non-increasing; bracket the root and bisect.
    double hi = -std::numeric_limits<double>::infinity();
    double lo = 0.0;
    double total = 0.0;
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& f : psi_tilde) {
      hi = std::max(hi, f.max());
      lowest = std::min(lowest, f.min());
      total += total_mass(f);
    }
    const double fields = static_cast<double>(psi_tilde.size());
    lo = std::min({0.0, lowest, (total - target_mass) / (fields * spec.area())});
    for (int b = 0; b < cfg.bisection_max_iter; ++b) {
      xi = 0.5 * (lo + hi);
      defect = mass_defect(psi_tilde, xi, target_mass);
      if (std::abs(defect) <= tol) {
        converged = true;
        break;
      }
      (defect > 0.0 ? lo : hi) = xi;
      if (hi - lo <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(xi))) break;
    }
    out.used_bisection = true;
    if (!converged && std::abs(defect) > tol) {
      throw NewtonStall(iter, defect, "mass projection multiplier did not converge");
    }
  }

  out.multiplier_xi = xi;
  for (const auto& f : psi_tilde) {
    GridField shifted(f.spec(), f.values() - xi);
    GridField psi(f.spec(), shifted.values().max(0.0));
    GridField lambda(f.spec(), psi.values() - shifted.values());
    out.corrected.push_back(std::move(psi));
    out.multiplier_lambda.push_back(std::move(lambda));
  }
  return out;
}

}  // namespace spimex
