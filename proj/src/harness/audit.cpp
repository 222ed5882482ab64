#include "spimex/harness/audit.hpp"

#include <cmath>
#include <string>

namespace spimex::harness {

namespace {

[[noreturn]] void violation(long step, const std::string& what) {
  throw InvariantViolation("audit failed at step " + std::to_string(step) + ": " + what);
}

}  // namespace

void Auditor::positivity(const GridField& f, const char* name, long step) {
  const double lo = f.min(), hi = f.max();
  if (!std::isfinite(lo) || !std::isfinite(hi)) violation(step, std::string(name) + " is not finite");
  if (lo < 0.0) {
    const double ratio = hi > 0.0 ? lo / hi : -1.0;
    summary_.worst_positivity = std::min(summary_.worst_positivity, ratio);
    if (lo < -limits_.positivity_rel * std::max(hi, 0.0)) {
      violation(step, std::string(name) + " minimum " + std::to_string(lo) + " below tolerance");
    }
  }
}

void Auditor::h1(const ProjectionOutcome& p, long step) {
  summary_.max_h1_newton = std::max(summary_.max_h1_newton, p.newton_iterations);
  if (p.newton_iterations > limits_.max_h1_newton) {
    violation(step, "H1 Newton used " + std::to_string(p.newton_iterations) + " iterations");
  }
  if (p.newton_iterations > 0) {
    summary_.max_h1_residual = std::max(summary_.max_h1_residual, p.h1_residual);
    if (!(p.h1_residual <= limits_.max_h1_residual)) {
      violation(step, "H1 Newton residual " + std::to_string(p.h1_residual));
    }
  }
}

void Auditor::check(const crime::StepResult& r) {
  const long step = r.state.step;
  positivity(r.state.phi, "density", step);
  positivity(r.state.p, "field", step);
  h1(r.projection, step);
  ++summary_.steps;
}

void Auditor::check(const epidemic::StepResult& r) {
  const long step = r.state.step;
  for (int k = 0; k < epidemic::kCompartments; ++k) positivity(r.state.psi[k], epidemic::kCompartmentNames[k], step);
  positivity(r.state.p, "p", step);
  h1(r.projection, step);

  const double drift = std::abs(epidemic::total_compartment_mass(r.state.psi) - r.state.mass0) / r.state.mass0;
  summary_.max_mass_drift = std::max(summary_.max_mass_drift, drift);
  if (!(drift <= limits_.mass_drift_rel)) violation(step, "relative mass drift " + std::to_string(drift));

  const double xi = r.projection.multiplier_xi;
  summary_.min_xi = first_xi_ ? xi : std::min(summary_.min_xi, xi);
  first_xi_ = false;
  if (xi < 0.0) violation(step, "mass multiplier xi = " + std::to_string(xi));

  summary_.max_scalar_newton = std::max(summary_.max_scalar_newton, r.projection.scalar_newton_iterations);
  if (r.projection.scalar_newton_iterations > limits_.max_scalar_newton) {
    violation(step, "scalar Newton used " + std::to_string(r.projection.scalar_newton_iterations) + " iterations");
  }
  if (r.projection.used_bisection) violation(step, "scalar Newton fell back to bisection");
  ++summary_.steps;
}

}  // namespace spimex::harness
