#pragma once

#include <cstdint>
#include <random>

#include "spimex/grid.hpp"
#include "spimex/model_crime.hpp"
#include "spimex/model_epidemic.hpp"

namespace spimex::harness {

/// Seeded source of uniform draws in [0, 1).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard, and each draw keeps the top 53 bits of one 64-bit output:
/// u = (x >> 11) * 2^-53. Results are therefore identical across platforms
/// and standard library implementations, unlike std::uniform_real_distribution.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : engine_(seed) {}

  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

struct GaussianSeed {
  double height;
  double width;
  double x;
  double y;
};

/// Draws `count` Gaussians in the order (h, sigma, x, y) per Gaussian:
/// h = height_scale r1, sigma = width_scale r2, x = lo + (hi - lo) r3, y likewise with r4.
std::vector<GaussianSeed> draw_gaussians(UniformSource& rng, int count, double height_scale, double width_scale,
                                         const GridSpec& spec);

/// sum_i sum_{j,k=-L..L} h_i exp(-((x - x_i + j Lx)^2 + (y - y_i + k Ly)^2) / sigma_i).
GridField gaussian_sum(const GridSpec& spec, const std::vector<GaussianSeed>& seeds, int images);

GridField gaussian_perturbation(UniformSource& rng, int count, double height_scale, double width_scale,
                                const GridSpec& spec, int images);

/// 0.1 sin(2 pi (x - 0.5)) cos(2 pi (y - 0.5)) + 0.2 and
/// 0.5 sin(2 pi (x - 0.5)) cos(2 pi (y - 0.5)) + 1, on the grid's own coordinates.
GridField smooth_density(const GridSpec& spec);
GridField smooth_field(const GridSpec& spec);

/// Homogeneous equilibrium plus the same perturbation on both fields.
crime::CrimeState perturbed_crime_equilibrium(const GridSpec& spec, double A0, const crime::CrimeForm& form,
                                              const GridField& delta);

/// S = 1 - sum delta_k, (E, P, A, I-, I+) = delta_1..5, H = R = 0, with the
/// five perturbations drawn in compartment order from one generator. The
/// attractiveness starts at the balance of its source and decay terms,
/// p = (delta_P_plus / delta_P_minus) (S + E + P + A + R).
epidemic::EpidemicState seeded_epidemic(UniformSource& rng, const GridSpec& spec,
                                        const epidemic::EpidemicParams& params, int count, double height_scale,
                                        double width_scale, int images);

/// Spatially constant counterpart: the infected fraction `seed` is split
/// evenly over E, P, A, I-, I+ and S = 1 - seed.
epidemic::EpidemicState uniform_epidemic(const GridSpec& spec, const epidemic::EpidemicParams& params, double seed);

/// Every compartment from smooth_density, p from smooth_field.
epidemic::EpidemicState smooth_epidemic(const GridSpec& spec);

}  // namespace spimex::harness
