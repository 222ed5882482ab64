#include "spimex/model_epidemic.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace spimex::epidemic {

namespace {

GridField attractiveness_source(const Compartments& psi, const GridField& p, const EpidemicParams& params) {
  GridField out(p.spec());
  out.values() = params.delta_P_plus * (psi[S].values() + psi[E].values() + psi[P].values() +
                                        psi[A].values() + psi[R].values()) -
                 params.delta_P_minus * p.values();
  return out;
}

ExplicitTerms explicit_terms(const Compartments& psi, const GridField& p, const EpidemicParams& params) {
  const MobileFields phi = mobile_of(psi);
  const MobileFields lin = apply_linear_part(phi, params);
  const MobileFields nonlin = apply_nonlinear_part(phi, psi[H], params);
  const ChemotaxisFlux<double> flux(p, params.p0);
  // R phi = (D/4) div(grad phi - 2 phi grad log(p+p0)); the flux part is explicit.
  const double flux_coeff = 2.0 * params.D / 4.0;

  ExplicitTerms out{};
  for (int k = 0; k < kMobile; ++k) {
    out.mobile[k] = flux.apply(phi[k]);
    out.mobile[k].values() = lin[k].values() + nonlin[k].values() - flux_coeff * out.mobile[k].values();
  }
  out.hospitalized = GridField(p.spec());
  out.hospitalized.values() = params.delta_I_plus * psi[Ip].values() - params.delta_H * psi[H].values();
  out.field = attractiveness_source(psi, p, params);
  return out;
}

Prediction crank_nicolson(const Compartments& psi, const GridField& p, const ExplicitTerms& terms,
                          const EpidemicParams& params, double tau, const SpectralPlan& plan) {
  const double half_phi = tau * params.D / 8.0;
  const double half_p = 0.5 * tau * params.eta_field * params.D;
  Prediction out;
  for (int k = 0; k < kMobile; ++k) {
    const int c = kMobileCompartment[k];
    GridField rhs = laplacian(psi[c]);
    rhs.values() = psi[c].values() + half_phi * rhs.values() + tau * terms.mobile[k].values();
    out.psi[c] = solve_shifted_laplacian(1.0, half_phi, rhs, plan);
  }
  out.psi[H] = GridField(p.spec());
  out.psi[H].values() = psi[H].values() + tau * terms.hospitalized.values();

  GridField rhs_p = laplacian(p);
  rhs_p.values() = p.values() + half_p * rhs_p.values() + tau * terms.field.values();
  out.p = solve_shifted_laplacian(1.0, half_p, rhs_p, plan);
  return out;
}

void require_positive_step(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
}

Prediction predict_ab2_from(const EpidemicState& state, const ExplicitTerms& now, const EpidemicParams& params,
                            double tau, const SpectralPlan& plan) {
  ExplicitTerms recomputed;
  const ExplicitTerms* before = state.prev_terms.get();
  if (!before) {
    recomputed = explicit_terms(state.prev->psi, state.prev->p, params);
    before = &recomputed;
  }
  const GridSpec& spec = state.p.spec();
  ExplicitTerms blend;
  for (int k = 0; k < kMobile; ++k) {
    blend.mobile[k] = GridField(spec);
    blend.mobile[k].values() = 1.5 * now.mobile[k].values() - 0.5 * before->mobile[k].values();
  }
  blend.hospitalized = GridField(spec);
  blend.hospitalized.values() = 1.5 * now.hospitalized.values() - 0.5 * before->hospitalized.values();
  blend.field = GridField(spec);
  blend.field.values() = 1.5 * now.field.values() - 0.5 * before->field.values();
  return crank_nicolson(state.psi, state.p, blend, params, tau, plan);
}

// First order without history, AB2 otherwise; `terms` receives the explicit
// terms of the current level so the next step can reuse them.
Prediction predict(const EpidemicState& state, const EpidemicParams& params, double tau,
                   const SpectralPlan& plan, std::shared_ptr<const ExplicitTerms>& terms) {
  require_positive_step(tau);
  terms = std::make_shared<const ExplicitTerms>(explicit_terms(state.psi, state.p, params));
  if (!state.prev) return crank_nicolson(state.psi, state.p, *terms, params, tau, plan);
  return predict_ab2_from(state, *terms, params, tau, plan);
}

EpidemicState advance(const EpidemicState& state, Compartments psi, GridField p, double tau) {
  EpidemicState next;
  next.psi = std::move(psi);
  next.p = std::move(p);
  next.time = state.time + tau;
  next.step = state.step + 1;
  next.mass0 = state.mass0;
  next.prev = History{state.psi, state.p};
  return next;
}

StepResult correct(const EpidemicState& state, Prediction predicted, double tau, const SpectralPlan& plan,
                   const ProjectionConfig& cfg) {
  double min_before = predicted.p.min();
  for (const auto& f : predicted.psi) min_before = std::min(min_before, f.min());

  ProjectionOutcome mass = project_l2_mass_positive(predicted.psi, state.mass0, cfg);
  ProjectionOutcome field = project_h1_positive(predicted.p, plan, cfg);

  if (mass.multiplier_xi < 0.0) {
    throw InvariantViolation("mass multiplier xi = " + std::to_string(mass.multiplier_xi) +
                             " is negative at step " + std::to_string(state.step + 1));
  }

  Compartments psi;
  for (int k = 0; k < kCompartments; ++k) psi[k] = mass.corrected[k];
  const double drift = std::abs(total_compartment_mass(psi) - state.mass0);
  if (drift > 1e-11 * state.mass0) {
    throw InvariantViolation("mass drift " + std::to_string(drift / state.mass0) + " at step " +
                             std::to_string(state.step + 1));
  }

  ProjectionOutcome merged = std::move(mass);
  merged.corrected.push_back(field.corrected.front());
  merged.multiplier_zeta = std::move(field.multiplier_zeta);
  merged.newton_iterations = field.newton_iterations;
  merged.krylov_iterations = field.krylov_iterations;
  merged.h1_residual = field.h1_residual;
  merged.max_constraint_violation_before =
      std::max(merged.max_constraint_violation_before, field.max_constraint_violation_before);

  EpidemicState next = advance(state, std::move(psi), field.corrected.front(), tau);
  return {std::move(next), std::move(merged), min_before};
}

}  // namespace

EpidemicParams EpidemicParams::published(const GridSpec& spec, double D, double eta_field) {
  EpidemicParams params;
  params.D = D;
  params.eta_field = eta_field;
  params.p0 = GridField(spec, 1.0 / 30.0);
  params.validate();
  return params;
}

EpidemicParams EpidemicParams::uniform_rates(const GridSpec& spec, double value, double D, double eta_field) {
  EpidemicParams params;
  params.lambda_inf = params.beta = params.eta_lat = params.eta_prime = value;
  params.rho_sym = params.p_H = value;
  params.delta_I_plus = params.delta_I_minus = params.delta_A = params.delta_H = params.delta_R = value;
  params.delta_P_plus = params.delta_P_minus = value;
  params.D = D;
  params.eta_field = eta_field;
  params.p0 = GridField(spec, 1.0 / 30.0);
  params.validate();
  return params;
}

void EpidemicParams::validate() const {
  for (double rate : {lambda_inf, beta, eta_lat, eta_prime, delta_I_plus, delta_I_minus, delta_A, delta_H,
                      delta_R, delta_P_plus, delta_P_minus, D, eta_field}) {
    if (!(rate >= 0.0)) throw std::invalid_argument("EpidemicParams: rates must be non-negative");
  }
  if (!(rho_sym >= 0.0 && rho_sym <= 1.0) || !(p_H >= 0.0 && p_H <= 1.0)) {
    throw std::invalid_argument("EpidemicParams: probabilities must lie in [0, 1]");
  }
  if (p0.n() == 0 || !(p0.min() > 0.0)) throw std::invalid_argument("EpidemicParams: p0 must be positive");
}

Eigen::Matrix<double, kMobile, kMobile> linear_matrix(const EpidemicParams& q) {
  Eigen::Matrix<double, kMobile, kMobile> L = Eigen::Matrix<double, kMobile, kMobile>::Zero();
  L(mS, mR) = q.delta_R;
  L(mE, mE) = -q.eta_lat;
  L(mP, mE) = q.eta_lat;
  L(mP, mP) = -q.eta_prime;
  L(mA, mP) = q.eta_prime * (1.0 - q.rho_sym);
  L(mA, mA) = -q.delta_A;
  L(mIm, mP) = q.eta_prime * q.rho_sym * (1.0 - q.p_H);
  L(mIm, mIm) = -q.delta_I_minus;
  L(mIp, mP) = q.eta_prime * q.rho_sym * q.p_H;
  L(mIp, mIp) = -q.delta_I_plus;
  L(mR, mA) = q.delta_A;
  L(mR, mIm) = q.delta_I_minus;
  L(mR, mR) = -q.delta_R;
  return L;
}

EpidemicState EpidemicState::initial(Compartments psi, GridField p) {
  for (const auto& f : psi) require_same_grid(f.spec(), p.spec());
  EpidemicState state;
  state.psi = std::move(psi);
  state.p = std::move(p);
  state.mass0 = total_compartment_mass(state.psi);
  return state;
}

double total_compartment_mass(const Compartments& psi) {
  double m = 0.0;
  for (const auto& f : psi) m += total_mass(f);
  return m;
}

MobileFields mobile_of(const Compartments& psi) {
  MobileFields phi;
  for (int k = 0; k < kMobile; ++k) phi[k] = psi[kMobileCompartment[k]];
  return phi;
}

MobileFields apply_linear_part(const MobileFields& phi, const EpidemicParams& params) {
  const auto L = linear_matrix(params);
  MobileFields out;
  for (int r = 0; r < kMobile; ++r) {
    out[r] = GridField(phi[r].spec());
    for (int c = 0; c < kMobile; ++c) {
      if (L(r, c) != 0.0) out[r].values() += L(r, c) * phi[c].values();
    }
  }
  return out;
}

MobileFields apply_nonlinear_part(const MobileFields& phi, const GridField& hospitalized,
                                  const EpidemicParams& params) {
  const GridSpec& spec = hospitalized.spec();
  const GridField::Array force =
      params.lambda_inf *
      (params.beta * (phi[mP].values() + phi[mA].values()) + phi[mIm].values() + phi[mIp].values()) *
      phi[mS].values();
  MobileFields out;
  for (auto& f : out) f = GridField(spec);
  out[mS].values() = -force;
  out[mE].values() = force;
  out[mR].values() = params.delta_H * hospitalized.values();
  return out;
}

Prediction predict_first_epi(const EpidemicState& state, const EpidemicParams& params, double tau,
                             const SpectralPlan& plan) {
  require_positive_step(tau);
  const ExplicitTerms terms = explicit_terms(state.psi, state.p, params);
  return crank_nicolson(state.psi, state.p, terms, params, tau, plan);
}

Prediction predict_ab2_epi(const EpidemicState& state, const EpidemicParams& params, double tau,
                           const SpectralPlan& plan) {
  require_positive_step(tau);
  if (!state.prev) throw std::logic_error("predict_ab2_epi needs the previous time level");
  return predict_ab2_from(state, explicit_terms(state.psi, state.p, params), params, tau, plan);
}

StepResult step_epi(const EpidemicState& state, const EpidemicParams& params, double tau,
                    const SpectralPlan& plan, const ProjectionConfig& cfg) {
  std::shared_ptr<const ExplicitTerms> terms;
  Prediction predicted = predict(state, params, tau, plan, terms);
  StepResult out = correct(state, std::move(predicted), tau, plan, cfg);
  out.state.prev_terms = std::move(terms);
  return out;
}

StepResult advance_first_interval(const EpidemicState& state, const EpidemicParams& params, double tau,
                                  int substeps, const SpectralPlan& plan, const ProjectionConfig& cfg) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  const double sub = tau / substeps;
  EpidemicState cur = state;
  cur.prev.reset();
  cur.prev_terms.reset();
  StepResult last;
  int max_scalar = 0, max_newton = 0;
  double min_before = 0.0;
  std::shared_ptr<const ExplicitTerms> start_terms, terms;
  for (int s = 0; s < substeps; ++s) {
    Prediction predicted = predict(cur, params, sub, plan, terms);
    if (s == 0) start_terms = terms;
    last = correct(cur, std::move(predicted), sub, plan, cfg);
    max_scalar = std::max(max_scalar, last.projection.scalar_newton_iterations);
    max_newton = std::max(max_newton, last.projection.newton_iterations);
    min_before = std::min(min_before, last.min_before);
    cur = last.state;
    cur.prev.reset();
    cur.prev_terms.reset();
  }
  last.projection.scalar_newton_iterations = max_scalar;
  last.projection.newton_iterations = max_newton;
  last.min_before = std::min(min_before, last.min_before);
  last.state.time = state.time + tau;
  last.state.step = state.step + 1;
  last.state.prev = History{state.psi, state.p};
  last.state.prev_terms = std::move(start_terms);
  return last;
}

UncorrectedResult step_epi_uncorrected(const EpidemicState& state, const EpidemicParams& params, double tau,
                                       const SpectralPlan& plan, double blowup_threshold) {
  Prediction predicted;
  std::shared_ptr<const ExplicitTerms> terms;
  try {
    predicted = predict(state, params, tau, plan, terms);
  } catch (const DomainError&) {
    throw Diverged(state.time, linf_norm(state.p), "singular sensitivity: p + p0 left the positive range");
  }
  double norm = linf_norm(predicted.p);
  double lowest = predicted.p.min();
  bool finite = predicted.p.all_finite();
  for (const auto& f : predicted.psi) {
    norm = std::max(norm, linf_norm(f));
    lowest = std::min(lowest, f.min());
    finite = finite && f.all_finite();
  }
  if (!finite || !(norm <= blowup_threshold)) throw Diverged(state.time + tau, norm);
  UncorrectedResult out;
  out.min_value = lowest;
  out.state = advance(state, std::move(predicted.psi), std::move(predicted.p), tau);
  out.state.prev_terms = std::move(terms);
  return out;
}

double virus_carriers(const EpidemicState& state, bool renormalize) {
  const double carriers = total_mass(state.psi[E]) + total_mass(state.psi[P]) + total_mass(state.psi[A]) +
                          total_mass(state.psi[Im]) + total_mass(state.psi[Ip]);
  return renormalize ? carriers / state.mass0 : carriers;
}

OdeVector ode_rhs(const OdeVector& y, const EpidemicParams& q) {
  const double force = q.lambda_inf * (q.beta * (y[P] + y[A]) + y[Im] + y[Ip]) * y[S];
  OdeVector f{};
  f[S] = -force + q.delta_R * y[R];
  f[E] = force - q.eta_lat * y[E];
  f[P] = q.eta_lat * y[E] - q.eta_prime * y[P];
  f[A] = q.eta_prime * (1.0 - q.rho_sym) * y[P] - q.delta_A * y[A];
  f[Im] = q.eta_prime * q.rho_sym * (1.0 - q.p_H) * y[P] - q.delta_I_minus * y[Im];
  f[Ip] = q.eta_prime * q.rho_sym * q.p_H * y[P] - q.delta_I_plus * y[Ip];
  f[H] = q.delta_I_plus * y[Ip] - q.delta_H * y[H];
  f[R] = q.delta_A * y[A] + q.delta_I_minus * y[Im] + q.delta_H * y[H] - q.delta_R * y[R];
  return f;
}

std::vector<OdeSample> ode_reference(const OdeVector& y0, const EpidemicParams& params,
                                     const OdeOptions& options) {
  if (!(options.tau > 0.0) || !(options.T >= 0.0) || !(options.sample_interval > 0.0)) {
    throw std::invalid_argument("ode_reference: tau, T and sample_interval must be positive");
  }
  for (double v : y0) {
    if (!(v >= 0.0)) throw std::invalid_argument("ode_reference: initial state must be non-negative");
  }
  auto axpy = [](const OdeVector& y, double a, const OdeVector& x) {
    OdeVector out;
    for (int k = 0; k < kCompartments; ++k) out[k] = y[k] + a * x[k];
    return out;
  };

  const long steps = std::lround(options.T / options.tau);
  const long every = std::max(1L, std::lround(options.sample_interval / options.tau));
  std::vector<OdeSample> samples{{0.0, y0}};
  OdeVector y = y0;
  OdeVector f_prev{};

  for (long k = 0; k < steps; ++k) {
    if (options.method == OdeMethod::RungeKutta4) {
      const double t = options.tau;
      const OdeVector k1 = ode_rhs(y, params);
      const OdeVector k2 = ode_rhs(axpy(y, 0.5 * t, k1), params);
      const OdeVector k3 = ode_rhs(axpy(y, 0.5 * t, k2), params);
      const OdeVector k4 = ode_rhs(axpy(y, t, k3), params);
      for (int c = 0; c < kCompartments; ++c) y[c] += t / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    } else if (k == 0) {
      f_prev = ode_rhs(y, params);
      const double sub = options.tau / options.first_step_substeps;
      for (int s = 0; s < options.first_step_substeps; ++s) y = axpy(y, sub, ode_rhs(y, params));
    } else {
      const OdeVector f_now = ode_rhs(y, params);
      for (int c = 0; c < kCompartments; ++c) y[c] += options.tau * (1.5 * f_now[c] - 0.5 * f_prev[c]);
      f_prev = f_now;
    }
    if ((k + 1) % every == 0 || k + 1 == steps) samples.push_back({(k + 1) * options.tau, y});
  }
  return samples;
}

}  // namespace spimex::epidemic
