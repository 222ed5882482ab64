#pragma once

#include <Eigen/Dense>

#include <complex>
#include <memory>

#include "spimex/grid.hpp"

namespace spimex {

/// Diagonalisation of the periodic five-point Laplacian by a real 2-D FFT.
///
/// eig(k, l) = -(4/h^2) (sin^2(pi k/n) + sin^2(pi l/n)). Plans are built with
/// FFTW_ESTIMATE so that repeated runs take the same code path and produce
/// bit-identical results. A plan is immutable once built; solves allocate
/// their own scratch and may run concurrently.
class SpectralPlan {
 public:
  explicit SpectralPlan(const GridSpec& spec);
  ~SpectralPlan();

  SpectralPlan(const SpectralPlan&) = delete;
  SpectralPlan& operator=(const SpectralPlan&) = delete;

  const GridSpec& spec() const { return spec_; }

  /// Full n x n table of Laplacian eigenvalues indexed by wavenumber (k, l).
  const Eigen::ArrayXXd& eigenvalues() const { return eig_full_; }

  /// Eigenvalues in the (n/2+1) x n half-spectrum layout of the transform.
  const Eigen::ArrayXd& half_spectrum_eigenvalues() const { return eig_half_; }

  Index spectrum_size() const { return eig_half_.size(); }

  void forward(const double* in, std::complex<double>* out) const;
  /// Unnormalised inverse transform; destroys `in`.
  void inverse(std::complex<double>* in, double* out) const;

 private:
  struct Plans;
  GridSpec spec_;
  Eigen::ArrayXXd eig_full_;
  Eigen::ArrayXd eig_half_;
  std::unique_ptr<Plans> plans_;
};

struct KrylovConfig {
  double tol = 1e-10;
  int max_iter = 200;
  int restart = 50;
};

/// Solves (alpha I - beta Lap_h) u = rhs exactly in Fourier space.
/// Throws SingularSystem if alpha - beta*eig vanishes for some mode.
GridField solve_shifted_laplacian(double alpha, double beta, const GridField& rhs,
                                  const SpectralPlan& plan);

/// Applies (alpha I - beta Lap_h) to u.
GridField apply_shifted_laplacian(double alpha, double beta, const GridField& u);

struct KrylovResult {
  GridField solution;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Applies the generalised Jacobian v -> v - Lap_h(mask * v).
GridField apply_masked_jacobian(const GridField& mask, const GridField& v);

/// Solves (I - Lap_h diag(mask)) v = rhs by restarted GMRES, right
/// preconditioned with the spectral inverse of (I - Lap_h).
/// Throws NoConvergence once cfg.max_iter Arnoldi steps are spent.
KrylovResult solve_masked_jacobian(const GridField& mask, const GridField& rhs,
                                   const SpectralPlan& plan, const KrylovConfig& cfg = {});

}  // namespace spimex
