#include "spimex/harness/initial.hpp"

#include <cmath>
#include <numbers>

namespace spimex::harness {

using epidemic::EpidemicState;

std::vector<GaussianSeed> draw_gaussians(UniformSource& rng, int count, double height_scale, double width_scale,
                                         const GridSpec& spec) {
  std::vector<GaussianSeed> seeds;
  seeds.reserve(count);
  for (int i = 0; i < count; ++i) {
    GaussianSeed g;
    g.height = height_scale * rng.next();
    g.width = width_scale * rng.next();
    g.x = spec.lo + spec.length() * rng.next();
    g.y = spec.lo + spec.length() * rng.next();
    seeds.push_back(g);
  }
  return seeds;
}

GridField gaussian_sum(const GridSpec& spec, const std::vector<GaussianSeed>& seeds, int images) {
  // The kernel factorises as exp(-dx^2/s) exp(-dy^2/s), so the double image
  // sum is the product of two one-dimensional image sums.
  const Index n = spec.n;
  const double period = spec.length();
  GridField out(spec);
  Eigen::ArrayXd gx(n), gy(n);
  for (const auto& g : seeds) {
    if (g.height == 0.0) continue;
    for (Index i = 0; i < n; ++i) {
      const double x = spec.coord(i);
      double sx = 0.0, sy = 0.0;
      for (int j = -images; j <= images; ++j) {
        const double dx = x - g.x + j * period;
        const double dy = x - g.y + j * period;
        sx += std::exp(-dx * dx / g.width);
        sy += std::exp(-dy * dy / g.width);
      }
      gx(i) = sx;
      gy(i) = sy;
    }
    out.values() += g.height * (gx.matrix() * gy.matrix().transpose()).array();
  }
  return out;
}

GridField gaussian_perturbation(UniformSource& rng, int count, double height_scale, double width_scale,
                                const GridSpec& spec, int images) {
  return gaussian_sum(spec, draw_gaussians(rng, count, height_scale, width_scale, spec), images);
}

namespace {

GridField sine_bump(const GridSpec& spec, double amplitude, double offset) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return GridField::from_function(spec, [&](double x, double y) {
    return amplitude * std::sin(two_pi * (x - 0.5)) * std::cos(two_pi * (y - 0.5)) + offset;
  });
}

}  // namespace

GridField smooth_density(const GridSpec& spec) { return sine_bump(spec, 0.1, 0.2); }
GridField smooth_field(const GridSpec& spec) { return sine_bump(spec, 0.5, 1.0); }

crime::CrimeState perturbed_crime_equilibrium(const GridSpec& spec, double A0, const crime::CrimeForm& form,
                                              const GridField& delta) {
  const crime::FieldPair eq = crime::crime_equilibrium(spec, A0, form);
  crime::CrimeState s;
  s.phi = eq.phi + delta;
  s.p = eq.p + delta;
  return s;
}

namespace {

GridField balanced_attractiveness(const epidemic::Compartments& psi, const epidemic::EpidemicParams& q) {
  using namespace epidemic;
  GridField p(psi[S].spec());
  p.values() = (q.delta_P_plus / q.delta_P_minus) *
               (psi[S].values() + psi[E].values() + psi[P].values() + psi[A].values() + psi[R].values());
  return p;
}

}  // namespace

EpidemicState seeded_epidemic(UniformSource& rng, const GridSpec& spec, const epidemic::EpidemicParams& params,
                              int count, double height_scale, double width_scale, int images) {
  using namespace epidemic;
  Compartments psi;
  psi[S] = GridField(spec, 1.0);
  for (int c : {E, P, A, Im, Ip}) {
    psi[c] = gaussian_perturbation(rng, count, height_scale, width_scale, spec, images);
    psi[S] -= psi[c];
  }
  psi[H] = GridField(spec);
  psi[R] = GridField(spec);
  GridField p = balanced_attractiveness(psi, params);
  return EpidemicState::initial(std::move(psi), std::move(p));
}

EpidemicState uniform_epidemic(const GridSpec& spec, const epidemic::EpidemicParams& params, double seed) {
  using namespace epidemic;
  Compartments psi;
  psi[S] = GridField(spec, 1.0 - seed);
  for (int c : {E, P, A, Im, Ip}) psi[c] = GridField(spec, seed / 5.0);
  psi[H] = GridField(spec);
  psi[R] = GridField(spec);
  GridField p = balanced_attractiveness(psi, params);
  return EpidemicState::initial(std::move(psi), std::move(p));
}

EpidemicState smooth_epidemic(const GridSpec& spec) {
  epidemic::Compartments psi;
  for (auto& f : psi) f = smooth_density(spec);
  return EpidemicState::initial(std::move(psi), smooth_field(spec));
}

}  // namespace spimex::harness
