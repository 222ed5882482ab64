#pragma once

// Per-step invariant checks shared by every driver. A violation throws
// InvariantViolation naming the step, the quantity and the offending value.

#include "spimex/model_crime.hpp"
#include "spimex/model_epidemic.hpp"

namespace spimex::harness {

struct AuditLimits {
  /// min u >= -positivity_rel * max u for every constrained field.
  double positivity_rel = 1e-12;
  double mass_drift_rel = 1e-11;
  int max_scalar_newton = 5;
  int max_h1_newton = 50;
  double max_h1_residual = 1e-10;
};

struct AuditSummary {
  long steps = 0;
  /// Smallest min(u) / max(u) seen over all constrained fields (0 if none went below zero).
  double worst_positivity = 0.0;
  double max_mass_drift = 0.0;
  double min_xi = 0.0;
  int max_scalar_newton = 0;
  int max_h1_newton = 0;
  double max_h1_residual = 0.0;
};

class Auditor {
 public:
  explicit Auditor(AuditLimits limits = {}) : limits_(limits) {}

  void check(const crime::StepResult& r);
  void check(const epidemic::StepResult& r);

  const AuditSummary& summary() const { return summary_; }
  const AuditLimits& limits() const { return limits_; }

 private:
  void positivity(const GridField& f, const char* name, long step);
  void h1(const ProjectionOutcome& p, long step);

  AuditLimits limits_;
  AuditSummary summary_;
  bool first_xi_ = true;
};

}  // namespace spimex::harness
