#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "spimex/projection.hpp"
#include "test_support.hpp"

using namespace spimex;
using spimex::testing::max_abs_diff;
using spimex::testing::random_field;

namespace {

double h1_sq(const GridField& u) {
  const double n = h1_norm(u);
  return n * n;
}

double l2_sq(const GridField& u) { return inner_product(u, u); }

// A field with a sprinkling of negative nodes on a positive background.
GridField scattered_negatives(const GridSpec& spec, std::mt19937_64& rng, double fraction = 0.2) {
  std::uniform_real_distribution<double> pos(0.1, 1.0), neg(-0.5, -0.01), u01(0.0, 1.0);
  GridField f(spec);
  for (Index k = 0; k < f.values().size(); ++k) f.values()(k) = u01(rng) < fraction ? neg(rng) : pos(rng);
  return f;
}

}  // namespace

TEST_CASE("clip_positive_l2") {
  const GridSpec spec(8);
  std::mt19937_64 rng(51);

  SUBCASE("feasible input is untouched") {
    const GridField u = random_field(spec, rng, 0.0, 2.0);
    const ProjectionOutcome out = clip_positive_l2(u);
    CHECK(max_abs_diff(out.corrected[0], u) == 0.0);
    CHECK(linf_norm(out.multiplier_lambda[0]) == 0.0);
    CHECK(out.max_constraint_violation_before == 0.0);
  }

  SUBCASE("uniformly negative input") {
    const ProjectionOutcome out = clip_positive_l2(GridField(spec, -1.0));
    CHECK(linf_norm(out.corrected[0]) == 0.0);
    CHECK(max_abs_diff(out.multiplier_lambda[0], GridField(spec, 1.0)) == 0.0);
    CHECK(out.max_constraint_violation_before == 1.0);
  }

  SUBCASE("per-node one-dimensional minimisation") {
    const GridField u = random_field(spec, rng);
    const ProjectionOutcome out = clip_positive_l2(u);
    for (Index k = 0; k < u.values().size(); ++k) {
      // Ternary search of (x - u_k)^2 on [0, |u_k| + 1].
      const double target = u.values()(k);
      double lo = 0.0, hi = std::abs(target) + 1.0;
      for (int it = 0; it < 200; ++it) {
        const double a = lo + (hi - lo) / 3.0, b = hi - (hi - lo) / 3.0;
        if ((a - target) * (a - target) < (b - target) * (b - target))
          hi = b;
        else
          lo = a;
      }
      CHECK(std::abs(out.corrected[0].values()(k) - 0.5 * (lo + hi)) <= 1e-9);
      CHECK(out.multiplier_lambda[0].values()(k) >= 0.0);
      CHECK(out.multiplier_lambda[0].values()(k) * out.corrected[0].values()(k) == 0.0);
    }
  }
}

TEST_CASE("project_h1_positive") {
  const GridSpec spec(8);
  const SpectralPlan plan(spec);
  std::mt19937_64 rng(53);

  SUBCASE("feasible input: identity with zero iterations") {
    const GridField p = random_field(spec, rng, 0.0, 1.0);
    const ProjectionOutcome out = project_h1_positive(p, plan);
    CHECK(out.newton_iterations == 0);
    CHECK(max_abs_diff(out.corrected[0], p) == 0.0);
    CHECK(linf_norm(*out.multiplier_zeta) == 0.0);
  }

  SUBCASE("constant negative input") {
    const ProjectionOutcome out = project_h1_positive(GridField(spec, -0.4), plan);
    CHECK(linf_norm(out.corrected[0]) == 0.0);
    CHECK(max_abs_diff(*out.multiplier_zeta, GridField(spec, 0.4)) <= 1e-15);
  }

  SUBCASE("matches a dense QP minimiser") {
    const Eigen::MatrixXd Q =
        spec.h() * spec.h() * (Eigen::MatrixXd::Identity(64, 64) - testing::dense_laplacian(spec));
    for (int trial = 0; trial < 10; ++trial) {
      const GridField pt = scattered_negatives(spec, rng);
      const ProjectionOutcome out = project_h1_positive(pt, plan);
      const Eigen::VectorXd oracle = testing::dense_nonneg_qp(Q, testing::to_vector(pt));
      CHECK(max_abs_diff(out.corrected[0], testing::from_vector(spec, oracle)) <= 1e-7);
      CHECK(out.newton_iterations >= 1);
      CHECK(out.newton_iterations <= 50);
      CHECK(out.h1_residual <= 1e-10);

      // KKT: (I - Lap) p = (I - Lap) pt + zeta, zeta >= 0, p >= 0, zeta p = 0.
      const GridField& p = out.corrected[0];
      const GridField& zeta = *out.multiplier_zeta;
      const GridField lhs = apply_shifted_laplacian(1.0, 1.0, p);
      const GridField rhs = apply_shifted_laplacian(1.0, 1.0, pt) + zeta;
      CHECK(l2_norm(lhs - rhs) <= 1e-9 * l2_norm(apply_shifted_laplacian(1.0, 1.0, pt)));
      CHECK(p.min() >= 0.0);
      CHECK(zeta.min() >= 0.0);
      CHECK((p.values() * zeta.values()).abs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("stall is reported") {
    ProjectionConfig cfg;
    cfg.h1_max_iter = 0;
    CHECK_THROWS_AS(project_h1_positive(scattered_negatives(spec, rng), plan, cfg), NewtonStall);
  }
}

TEST_CASE("project_l2_mass_positive") {
  std::mt19937_64 rng(59);

  SUBCASE("feasible input with matching mass") {
    const GridSpec spec(8);
    std::vector<GridField> psi;
    for (int k = 0; k < 8; ++k) psi.push_back(random_field(spec, rng, 0.0, 1.0));
    double target = 0.0;
    for (const auto& f : psi) target += total_mass(f);
    const ProjectionOutcome out = project_l2_mass_positive(psi, target);
    CHECK(out.multiplier_xi == 0.0);
    CHECK(out.scalar_newton_iterations == 0);
    for (int k = 0; k < 8; ++k) CHECK(max_abs_diff(out.corrected[k], psi[k]) == 0.0);
  }

  SUBCASE("uniform excess is removed evenly") {
    const GridSpec spec(8);
    const double eps = 0.01;
    std::vector<GridField> psi;
    double target = 0.0;
    for (int k = 0; k < 8; ++k) {
      psi.emplace_back(spec, 0.1 + 0.05 * k);
      target += (0.1 + 0.05 * k) * spec.area();
    }
    target -= eps * spec.area();
    const ProjectionOutcome out = project_l2_mass_positive(psi, target);
    CHECK(out.multiplier_xi == doctest::Approx(eps / 8.0).epsilon(1e-12));
    CHECK(out.scalar_newton_iterations == 1);
  }

  SUBCASE("random fields against the bisection oracle") {
    const GridSpec spec(4);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<GridField> psi;
      double target = 0.0;
      for (int k = 0; k < 8; ++k) {
        psi.push_back(k == 3 ? random_field(spec, rng, -0.3, 1.0) : random_field(spec, rng, 0.0, 1.0));
        target += total_mass(psi.back());
      }
      const ProjectionOutcome out = project_l2_mass_positive(psi, target);
      const double oracle = testing::bisect_mass_multiplier(psi, target);
      CHECK(std::abs(out.multiplier_xi - oracle) <= 1e-12);
      CHECK(out.multiplier_xi >= 0.0);
      CHECK(out.scalar_newton_iterations <= 5);
      double mass = 0.0;
      for (const auto& f : out.corrected) mass += total_mass(f);
      CHECK(std::abs(mass - target) <= 1e-11 * target);
      for (int k = 0; k < 8; ++k) {
        CHECK(out.corrected[k].min() >= 0.0);
        CHECK(out.multiplier_lambda[k].min() >= -1e-15);
        CHECK((out.corrected[k].values() * out.multiplier_lambda[k].values()).abs().maxCoeff() <= 1e-15);
      }
    }
  }

  SUBCASE("vanishing derivative falls back to bisection") {
    const GridSpec spec(4);
    std::vector<GridField> psi(8, GridField(spec, -0.1));
    const ProjectionOutcome out = project_l2_mass_positive(psi, 1.0);
    CHECK(out.used_bisection);
    CHECK(out.multiplier_xi == doctest::Approx(-0.1 - 1.0 / 8.0));
    double mass = 0.0;
    for (const auto& f : out.corrected) mass += total_mass(f);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-11));
  }

  SUBCASE("non-positive target is infeasible") {
    const GridSpec spec(4);
    std::vector<GridField> psi(8, GridField(spec, 1.0));
    CHECK_THROWS_AS(project_l2_mass_positive(psi, 0.0), Infeasible);
  }
}

TEST_CASE("projection properties on random instances") {
  const GridSpec spec(8);
  const SpectralPlan plan(spec);
  std::mt19937_64 rng(61);

  for (int trial = 0; trial < 100; ++trial) {
    // L2 clip
    const GridField ut = random_field(spec, rng);
    const GridField v = random_field(spec, rng, 0.0, 1.0);
    const GridField pu = clip_positive_l2(ut).corrected[0];
    CHECK(l2_sq(pu - v) + l2_sq(pu - ut) <= l2_sq(ut - v) * (1.0 + 1e-12));
    CHECK(max_abs_diff(clip_positive_l2(pu).corrected[0], pu) == 0.0);

    // H1 positivity
    const GridField pt = scattered_negatives(spec, rng, 0.3);
    const GridField ph = project_h1_positive(pt, plan).corrected[0];
    CHECK(h1_sq(ph - v) + h1_sq(ph - pt) <= h1_sq(pt - v) * (1.0 + 1e-10));
    CHECK(max_abs_diff(project_h1_positive(ph, plan).corrected[0], ph) <= 1e-12);
  }
}
