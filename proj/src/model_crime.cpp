#include "spimex/model_crime.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace spimex::crime {

namespace {

// Flux and reaction, i.e. everything the predictor treats explicitly.
FieldPair explicit_terms(const GridField& phi, const GridField& p, const CrimeParams& params) {
  FieldPair out = reaction_terms(phi, p, params);
  const GridField flux = chemotaxis_divergence(phi, p, params.p0);
  out.phi.values() -= (params.chem_prefactor * params.flux_factor) * flux.values();
  return out;
}

// (I - tau c/2 Lap) phi~ = phi + tau c/2 Lap phi + tau N_phi, likewise for p.
FieldPair crank_nicolson(const GridField& phi, const GridField& p, const FieldPair& explicit_part,
                         const CrimeParams& params, double tau, const SpectralPlan& plan) {
  const double half_phi = 0.5 * tau * params.chem_prefactor;
  const double half_p = 0.5 * tau * params.eta * params.D;

  GridField rhs_phi = laplacian(phi);
  rhs_phi.values() = phi.values() + half_phi * rhs_phi.values() + tau * explicit_part.phi.values();
  GridField rhs_p = laplacian(p);
  rhs_p.values() = p.values() + half_p * rhs_p.values() + tau * explicit_part.p.values();

  return {solve_shifted_laplacian(1.0, half_phi, rhs_phi, plan),
          solve_shifted_laplacian(1.0, half_p, rhs_p, plan)};
}

void require_positive_step(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
}

FieldPair predict_ab2_from(const CrimeState& state, const FieldPair& now, const CrimeParams& params,
                           double tau, const SpectralPlan& plan) {
  FieldPair recomputed;
  const FieldPair* before = state.prev_terms.get();
  if (!before) {
    recomputed = explicit_terms(state.prev->phi, state.prev->p, params);
    before = &recomputed;
  }
  FieldPair blend{GridField(state.phi.spec()), GridField(state.p.spec())};
  blend.phi.values() = 1.5 * now.phi.values() - 0.5 * before->phi.values();
  blend.p.values() = 1.5 * now.p.values() - 0.5 * before->p.values();
  return crank_nicolson(state.phi, state.p, blend, params, tau, plan);
}

// Predictor of step(): first order without history, AB2 otherwise. The
// explicit terms at the current level are handed back for the next step.
FieldPair predict(const CrimeState& state, const CrimeParams& params, double tau, const SpectralPlan& plan,
                  std::shared_ptr<const FieldPair>& terms) {
  require_positive_step(tau);
  terms = std::make_shared<const FieldPair>(explicit_terms(state.phi, state.p, params));
  if (!state.prev) return crank_nicolson(state.phi, state.p, *terms, params, tau, plan);
  return predict_ab2_from(state, *terms, params, tau, plan);
}

CrimeState advance(const CrimeState& state, GridField phi, GridField p, double tau) {
  CrimeState next;
  next.phi = std::move(phi);
  next.p = std::move(p);
  next.time = state.time + tau;
  next.step = state.step + 1;
  next.prev = FieldPair{state.phi, state.p};
  return next;
}

StepResult correct(const CrimeState& state, FieldPair predicted, double tau, const SpectralPlan& plan,
                   const ProjectionConfig& cfg) {
  ProjectionOutcome density = clip_positive_l2(predicted.phi);
  ProjectionOutcome field = project_h1_positive(predicted.p, plan, cfg);

  ProjectionOutcome merged;
  merged.corrected = {density.corrected.front(), field.corrected.front()};
  merged.multiplier_lambda = std::move(density.multiplier_lambda);
  merged.multiplier_zeta = std::move(field.multiplier_zeta);
  merged.newton_iterations = field.newton_iterations;
  merged.krylov_iterations = field.krylov_iterations;
  merged.h1_residual = field.h1_residual;
  merged.max_constraint_violation_before =
      std::max(density.max_constraint_violation_before, field.max_constraint_violation_before);

  CrimeState next = advance(state, merged.corrected[0], merged.corrected[1], tau);
  return {std::move(next), std::move(merged)};
}

}  // namespace

CrimeParams CrimeParams::general(double D, double eta, GridField p0) {
  CrimeParams params;
  params.D = D;
  params.eta = eta;
  params.p0 = std::move(p0);
  params.chem_prefactor = D / 4.0;
  params.reaction = GeneralForm{};
  params.validate();
  return params;
}

CrimeParams CrimeParams::crime(double D, double eta, GridField A0, CrimeForm form) {
  CrimeParams params;
  params.D = D;
  params.eta = eta;
  params.p0 = std::move(A0);
  params.chem_prefactor = D;
  params.reaction = form;
  params.validate();
  return params;
}

void CrimeParams::validate() const {
  if (!(D > 0.0)) throw std::invalid_argument("CrimeParams: D must be positive");
  if (!(eta > 0.0)) throw std::invalid_argument("CrimeParams: eta must be positive");
  if (p0.n() == 0 || !(p0.min() > 0.0)) throw std::invalid_argument("CrimeParams: p0 must be positive");
}

FieldPair crime_equilibrium(const GridSpec& spec, double A0, const CrimeForm& form) {
  const double rho_bar = form.gamma * form.omega / (form.kappa * form.gamma + A0 * form.omega);
  const double a_bar = form.kappa * form.gamma / form.omega;
  return {GridField(spec, rho_bar), GridField(spec, a_bar)};
}

FieldPair reaction_terms(const GridField& phi, const GridField& p, const CrimeParams& params) {
  require_same_grid(phi.spec(), p.spec());
  const auto shifted = p.values() + params.p0.values();
  return std::visit(
      [&](const auto& form) -> FieldPair {
        using Form = std::decay_t<decltype(form)>;
        if constexpr (std::is_same_v<Form, GeneralForm>) {
          GridField uptake(phi.spec(), shifted * phi.values());
          return {-uptake, GridField(phi.spec(), uptake.values() - p.values())};
        } else {
          const GridField::Array uptake = shifted * phi.values();
          return {GridField(phi.spec(), form.gamma - uptake),
                  GridField(phi.spec(), form.kappa * uptake - form.omega * p.values())};
        }
      },
      params.reaction);
}

FieldPair predict_first(const CrimeState& state, const CrimeParams& params, double tau,
                        const SpectralPlan& plan) {
  require_positive_step(tau);
  const FieldPair n0 = explicit_terms(state.phi, state.p, params);
  return crank_nicolson(state.phi, state.p, n0, params, tau, plan);
}

FieldPair predict_ab2(const CrimeState& state, const CrimeParams& params, double tau,
                      const SpectralPlan& plan) {
  require_positive_step(tau);
  if (!state.prev) throw std::logic_error("predict_ab2 needs the previous time level");
  return predict_ab2_from(state, explicit_terms(state.phi, state.p, params), params, tau, plan);
}

StepResult step(const CrimeState& state, const CrimeParams& params, double tau,
                const SpectralPlan& plan, const ProjectionConfig& cfg) {
  std::shared_ptr<const FieldPair> terms;
  FieldPair predicted = predict(state, params, tau, plan, terms);
  StepResult out = correct(state, std::move(predicted), tau, plan, cfg);
  out.state.prev_terms = std::move(terms);
  return out;
}

StepResult advance_first_interval(const CrimeState& state, const CrimeParams& params, double tau,
                                  int substeps, const SpectralPlan& plan, const ProjectionConfig& cfg) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  const double sub = tau / substeps;
  CrimeState cur = state;
  cur.prev.reset();
  cur.prev_terms.reset();
  StepResult last;
  ProjectionOutcome worst;
  std::shared_ptr<const FieldPair> start_terms, terms;
  for (int s = 0; s < substeps; ++s) {
    FieldPair predicted = predict(cur, params, sub, plan, terms);
    if (s == 0) start_terms = terms;
    last = correct(cur, std::move(predicted), sub, plan, cfg);
    worst.newton_iterations = std::max(worst.newton_iterations, last.projection.newton_iterations);
    worst.max_constraint_violation_before = std::max(worst.max_constraint_violation_before,
                                                     last.projection.max_constraint_violation_before);
    cur = last.state;
    cur.prev.reset();
    cur.prev_terms.reset();
  }
  last.projection.newton_iterations = worst.newton_iterations;
  last.projection.max_constraint_violation_before = worst.max_constraint_violation_before;
  last.state.time = state.time + tau;
  last.state.step = state.step + 1;
  last.state.prev = FieldPair{state.phi, state.p};
  last.state.prev_terms = std::move(start_terms);
  return last;
}

UncorrectedResult step_uncorrected(const CrimeState& state, const CrimeParams& params, double tau,
                                   const SpectralPlan& plan, double blowup_threshold) {
  FieldPair predicted;
  std::shared_ptr<const FieldPair> terms;
  try {
    predicted = predict(state, params, tau, plan, terms);
  } catch (const DomainError&) {
    throw Diverged(state.time, state.p.min(), "singular sensitivity: p + p0 left the positive range");
  }
  const double norm = std::max(linf_norm(predicted.phi), linf_norm(predicted.p));
  if (!predicted.phi.all_finite() || !predicted.p.all_finite() || !(norm <= blowup_threshold)) {
    throw Diverged(state.time + tau, norm);
  }
  UncorrectedResult out;
  out.min_phi = predicted.phi.min();
  out.min_p = predicted.p.min();
  out.state = advance(state, std::move(predicted.phi), std::move(predicted.p), tau);
  out.state.prev_terms = std::move(terms);
  return out;
}

}  // namespace spimex::crime
