#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "spimex/model_crime.hpp"
#include "test_support.hpp"

using namespace spimex;
using namespace spimex::crime;
using spimex::testing::max_abs_diff;

namespace {

// Scalar reaction oracles typed out from the model equations.
std::pair<double, double> general_rhs(double phi, double p, double p0) {
  return {-(p + p0) * phi, (p + p0) * phi - p};
}

std::pair<double, double> crime_rhs(double rho, double A, double A0, const CrimeForm& f) {
  return {f.gamma - rho * (A + A0), f.kappa * rho * (A + A0) - f.omega * A};
}

// Dense assembly of one predictor step: CN on both fields, explicit flux and
// reaction combined with weights (w_now, w_prev).
FieldPair dense_predictor(const CrimeState& s, const CrimeParams& prm, double tau, double w_now, double w_prev) {
  const GridSpec& spec = s.phi.spec();
  const Index N = spec.n * spec.n;
  const Eigen::MatrixXd L = testing::dense_laplacian(spec);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
  const double a = 0.5 * tau * prm.chem_prefactor, b = 0.5 * tau * prm.eta * prm.D;

  auto explicit_at = [&](const GridField& phi, const GridField& p) {
    Eigen::VectorXd ephi(N), ep(N);
    const GridField chem = testing::brute_force_chemotaxis(phi, p, prm.p0);
    for (Index k = 0; k < N; ++k) {
      const double x = phi.values()(k), y = p.values()(k), q0 = prm.p0.values()(k);
      const auto r = std::holds_alternative<GeneralForm>(prm.reaction)
                         ? general_rhs(x, y, q0)
                         : crime_rhs(x, y, q0, std::get<CrimeForm>(prm.reaction));
      ephi(k) = r.first - prm.chem_prefactor * prm.flux_factor * chem.values()(k);
      ep(k) = r.second;
    }
    return std::pair{ephi, ep};
  };

  auto [ephi, ep] = explicit_at(s.phi, s.p);
  ephi *= w_now;
  ep *= w_now;
  if (w_prev != 0.0) {
    const auto [qphi, qp] = explicit_at(s.prev->phi, s.prev->p);
    ephi += w_prev * qphi;
    ep += w_prev * qp;
  }
  const Eigen::VectorXd phi = testing::to_vector(s.phi), p = testing::to_vector(s.p);
  const Eigen::VectorXd nphi = (I - a * L).partialPivLu().solve((I + a * L) * phi + tau * ephi);
  const Eigen::VectorXd np = (I - b * L).partialPivLu().solve((I + b * L) * p + tau * ep);
  return {testing::from_vector(spec, nphi), testing::from_vector(spec, np)};
}

CrimeState smooth_state(const GridSpec& spec, std::mt19937_64& rng) {
  CrimeState s;
  s.phi = testing::smooth_positive_field(spec, rng, 0.3);
  s.p = testing::smooth_positive_field(spec, rng, 1.0);
  return s;
}

}  // namespace

TEST_CASE("parameter factories") {
  const GridSpec spec(8);
  const CrimeParams g = CrimeParams::general(0.1, 1.0, GridField(spec, 1.0 / 30.0));
  CHECK(g.chem_prefactor == doctest::Approx(0.025));
  CHECK(g.flux_factor == 2.0);
  const CrimeParams c = CrimeParams::crime(0.01, 0.2, GridField(spec, 1.0 / 30.0), CrimeForm{});
  CHECK(c.chem_prefactor == doctest::Approx(0.01));
  CHECK(std::holds_alternative<CrimeForm>(c.reaction));
  CHECK_THROWS_AS(CrimeParams::general(0.0, 1.0, GridField(spec, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(CrimeParams::general(0.1, -1.0, GridField(spec, 1.0)), std::invalid_argument);
  CHECK_THROWS_AS(CrimeParams::general(0.1, 1.0, GridField(spec, 0.0)), std::invalid_argument);
}

TEST_CASE("reaction terms") {
  const GridSpec spec(8);
  std::mt19937_64 rng(71);
  const GridField phi = testing::random_field(spec, rng, 0.0, 1.0);
  const GridField p = testing::random_field(spec, rng, 0.0, 1.0);
  const GridField p0 = testing::random_field(spec, rng, 0.01, 0.1);

  SUBCASE("general form") {
    const FieldPair r = reaction_terms(phi, p, CrimeParams::general(0.1, 1.0, p0));
    for (Index k = 0; k < phi.values().size(); ++k) {
      const auto [a, b] = general_rhs(phi.values()(k), p.values()(k), p0.values()(k));
      CHECK(r.phi.values()(k) == doctest::Approx(a).epsilon(1e-14));
      CHECK(r.p.values()(k) == doctest::Approx(b).epsilon(1e-14));
    }
  }

  SUBCASE("crime form") {
    const CrimeForm form{0.02, 0.07, 0.5};
    const FieldPair r = reaction_terms(phi, p, CrimeParams::crime(0.1, 0.2, p0, form));
    for (Index k = 0; k < phi.values().size(); ++k) {
      const auto [a, b] = crime_rhs(phi.values()(k), p.values()(k), p0.values()(k), form);
      CHECK(r.phi.values()(k) == doctest::Approx(a).epsilon(1e-14));
      CHECK(r.p.values()(k) == doctest::Approx(b).epsilon(1e-14));
    }
  }

  SUBCASE("homogeneous equilibrium is a fixed point") {
    const CrimeForm form;
    const double A0 = 1.0 / 30.0;
    const FieldPair eq = crime_equilibrium(spec, A0, form);
    const double rho = form.gamma * form.omega / (form.kappa * form.gamma + A0 * form.omega);
    CHECK(eq.phi(0, 0) == doctest::Approx(rho));
    CHECK(eq.p(0, 0) == doctest::Approx(form.kappa * form.gamma / form.omega));
    const FieldPair r = reaction_terms(eq.phi, eq.p, CrimeParams::crime(0.1, 0.2, GridField(spec, A0), form));
    CHECK(linf_norm(r.phi) <= 1e-16);
    CHECK(linf_norm(r.p) <= 1e-16);
  }
}

TEST_CASE("predictor on spatially constant data") {
  const GridSpec spec(8);
  const SpectralPlan plan(spec);
  const double p0 = 1.0 / 30.0, tau = 0.01;
  const CrimeParams prm = CrimeParams::general(0.1, 1.0, GridField(spec, p0));

  CrimeState s;
  s.phi = GridField(spec, 0.4);
  s.p = GridField(spec, 0.7);

  SUBCASE("explicit Euler on the reactions") {
    const FieldPair out = predict_first(s, prm, tau, plan);
    const auto [a, b] = general_rhs(0.4, 0.7, p0);
    CHECK(max_abs_diff(out.phi, GridField(spec, 0.4 + tau * a)) <= 1e-15);
    CHECK(max_abs_diff(out.p, GridField(spec, 0.7 + tau * b)) <= 1e-15);
  }

  SUBCASE("Adams-Bashforth extrapolation") {
    s.prev = FieldPair{GridField(spec, 0.45), GridField(spec, 0.65)};
    const FieldPair out = predict_ab2(s, prm, tau, plan);
    const auto [a1, b1] = general_rhs(0.4, 0.7, p0);
    const auto [a0, b0] = general_rhs(0.45, 0.65, p0);
    CHECK(max_abs_diff(out.phi, GridField(spec, 0.4 + tau * (1.5 * a1 - 0.5 * a0))) <= 1e-15);
    CHECK(max_abs_diff(out.p, GridField(spec, 0.7 + tau * (1.5 * b1 - 0.5 * b0))) <= 1e-15);
  }

  SUBCASE("AB2 without history is a logic error") {
    CHECK_THROWS_AS(predict_ab2(s, prm, tau, plan), std::logic_error);
    CHECK_THROWS_AS(predict_first(s, prm, 0.0, plan), std::invalid_argument);
  }
}

TEST_CASE("predictor matches dense assembly") {
  const GridSpec spec(8);
  const SpectralPlan plan(spec);
  std::mt19937_64 rng(73);
  const double tau = 0.003;

  for (const bool crime_form : {false, true}) {
    CAPTURE(crime_form);
    const GridField p0 = testing::random_field(spec, rng, 0.02, 0.05);
    const CrimeParams prm = crime_form ? CrimeParams::crime(0.05, 0.3, p0, CrimeForm{})
                                       : CrimeParams::general(0.1, 1.0, p0);
    CrimeState s = smooth_state(spec, rng);
    s.phi += testing::random_field(spec, rng, 0.0, 0.05);

    const FieldPair first = predict_first(s, prm, tau, plan);
    const FieldPair dense_first = dense_predictor(s, prm, tau, 1.0, 0.0);
    CHECK(max_abs_diff(first.phi, dense_first.phi) <= 1e-12);
    CHECK(max_abs_diff(first.p, dense_first.p) <= 1e-12);

    s.prev = FieldPair{testing::smooth_positive_field(spec, rng, 0.3), testing::smooth_positive_field(spec, rng, 1.0)};
    const FieldPair ab2 = predict_ab2(s, prm, tau, plan);
    const FieldPair dense_ab2 = dense_predictor(s, prm, tau, 1.5, -0.5);
    CHECK(max_abs_diff(ab2.phi, dense_ab2.phi) <= 1e-12);
    CHECK(max_abs_diff(ab2.p, dense_ab2.p) <= 1e-12);
  }
}

TEST_CASE("mass balance of the density") {
  // Diffusion and flux are conservative, so the density mass changes only by
  // the integrated reaction.
  const GridSpec spec(32);
  const SpectralPlan plan(spec);
  std::mt19937_64 rng(79);
  const CrimeParams prm = CrimeParams::general(0.1, 1.0, GridField(spec, 1.0 / 30.0));
  const CrimeState s = smooth_state(spec, rng);
  const double tau = 1e-3;
  const FieldPair out = predict_first(s, prm, tau, plan);
  const FieldPair r = reaction_terms(s.phi, s.p, prm);
  CHECK(total_mass(out.phi) - total_mass(s.phi) == doctest::Approx(tau * total_mass(r.phi)).epsilon(1e-10));
}

TEST_CASE("corrected step") {
  const GridSpec spec(16);
  const SpectralPlan plan(spec);
  std::mt19937_64 rng(83);
  const CrimeParams prm = CrimeParams::general(0.1, 1.0, GridField(spec, 1.0 / 30.0));
  const double tau = 1e-3;

  SUBCASE("positive predictor passes through unchanged") {
    const CrimeState s = smooth_state(spec, rng);
    const StepResult r = step(s, prm, tau, plan);
    const FieldPair pred = predict_first(s, prm, tau, plan);
    CHECK(max_abs_diff(r.state.phi, pred.phi) == 0.0);
    CHECK(max_abs_diff(r.state.p, pred.p) == 0.0);
    CHECK(r.projection.newton_iterations == 0);
    CHECK(r.state.step == 1);
    CHECK(r.state.time == doctest::Approx(tau));
    REQUIRE(r.state.prev);
    CHECK(max_abs_diff(r.state.prev->phi, s.phi) == 0.0);

    // The second step uses the history and agrees with the AB2 predictor.
    const StepResult r2 = step(r.state, prm, tau, plan);
    CHECK(max_abs_diff(r2.state.phi, predict_ab2(r.state, prm, tau, plan).phi) == 0.0);
  }

  SUBCASE("negative predictor values are corrected") {
    CrimeState s;
    s.phi = testing::random_field(spec, rng, 0.0, 1.0);
    s.p = testing::random_field(spec, rng, 0.0, 0.05);
    s.p(3, 4) = 0.0;
    s.phi(5, 5) = 0.0;
    const StepResult r = step(s, prm, 0.05, plan);
    CHECK(r.state.phi.min() >= 0.0);
    CHECK(r.state.p.min() >= 0.0);
    CHECK(r.projection.max_constraint_violation_before > 0.0);
    CHECK(r.projection.newton_iterations <= 5);
  }

  SUBCASE("single first interval substep equals one step") {
    const CrimeState s = smooth_state(spec, rng);
    const StepResult a = advance_first_interval(s, prm, tau, 1, plan);
    const StepResult b = step(s, prm, tau, plan);
    CHECK(max_abs_diff(a.state.phi, b.state.phi) == 0.0);
    CHECK(max_abs_diff(a.state.p, b.state.p) == 0.0);
    CHECK(a.state.step == 1);

    const StepResult c = advance_first_interval(s, prm, tau, 10, plan);
    CHECK(c.state.time == doctest::Approx(tau));
    CHECK(c.state.step == 1);
    REQUIRE(c.state.prev);
    CHECK(max_abs_diff(c.state.prev->p, s.p) == 0.0);
    // The substepped result is closer to the finely resolved one.
    const StepResult fine = advance_first_interval(s, prm, tau, 200, plan);
    CHECK(l2_norm(c.state.phi - fine.state.phi) < l2_norm(a.state.phi - fine.state.phi));
  }

  SUBCASE("stepping is deterministic") {
    const CrimeState s = smooth_state(spec, rng);
    CrimeState x = s, y = s;
    for (int k = 0; k < 5; ++k) {
      x = step(x, prm, tau, plan).state;
      y = step(y, prm, tau, plan).state;
    }
    CHECK(max_abs_diff(x.phi, y.phi) == 0.0);
    CHECK(max_abs_diff(x.p, y.p) == 0.0);
  }

  SUBCASE("cached history terms change nothing") {
    CrimeState x = advance_first_interval(smooth_state(spec, rng), prm, tau, 3, plan).state;
    REQUIRE(x.prev_terms);
    CrimeState y = x;
    for (int k = 0; k < 4; ++k) {
      x = step(x, prm, tau, plan).state;
      y.prev_terms.reset();
      y = step(y, prm, tau, plan).state;
      REQUIRE(x.prev_terms);
    }
    CHECK(max_abs_diff(x.phi, y.phi) == 0.0);
    CHECK(max_abs_diff(x.p, y.p) == 0.0);
  }
}

TEST_CASE("uncorrected stepping") {
  const GridSpec spec(16);
  const SpectralPlan plan(spec);
  std::mt19937_64 rng(89);
  const CrimeParams prm = CrimeParams::general(0.1, 1.0, GridField(spec, 1.0 / 30.0));

  SUBCASE("returns the raw predictor") {
    CrimeState s = smooth_state(spec, rng);
    const UncorrectedResult r = step_uncorrected(s, prm, 1e-3, plan);
    CHECK(max_abs_diff(r.state.phi, predict_first(s, prm, 1e-3, plan).phi) == 0.0);
    CHECK(r.min_phi == r.state.phi.min());
  }

  SUBCASE("loss of positivity in p + p0 is divergence") {
    CrimeState s = smooth_state(spec, rng);
    s.p(2, 2) = -1.0;
    CHECK_THROWS_AS(step_uncorrected(s, prm, 1e-3, plan), Diverged);
  }

  SUBCASE("blow-up threshold") {
    CrimeState s = smooth_state(spec, rng);
    CHECK_THROWS_AS(step_uncorrected(s, prm, 1e-3, plan, 0.5), Diverged);
  }
}
