#include "spimex/linsolve.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

namespace spimex {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

FftwBuffer<double> real_buffer(size_t count) { return FftwBuffer<double>(fftw_alloc_real(count)); }
FftwBuffer<fftw_complex> complex_buffer(size_t count) {
  return FftwBuffer<fftw_complex>(fftw_alloc_complex(count));
}

// Plans are made on fftw_malloc'ed buffers, so they may use SIMD kernels;
// new-array execution is valid only for arrays with the same alignment.
bool aligned(const void* p) { return fftw_alignment_of(reinterpret_cast<double*>(const_cast<void*>(p))) == 0; }

}  // namespace

struct SpectralPlan::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

SpectralPlan::SpectralPlan(const GridSpec& spec) : spec_(spec), plans_(std::make_unique<Plans>()) {
  const int n = spec.n;
  const int half = n / 2 + 1;
  const double h = spec.h();
  Eigen::ArrayXd s2(n);
  for (int k = 0; k < n; ++k) {
    const double s = std::sin(std::numbers::pi * k / n);
    s2(k) = s * s;
  }
  eig_full_.resize(n, n);
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k) eig_full_(k, l) = -4.0 / (h * h) * (s2(k) + s2(l));

  // Column-major storage (i fastest) is a row-major [j][i] array for FFTW,
  // so the halved dimension runs along i.
  eig_half_.resize(static_cast<Index>(half) * n);
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < half; ++k) eig_half_(k + half * l) = eig_full_(k, l);

  // FFTW_ESTIMATE picks the algorithm without timing runs, so the same grid
  // always gets the same plan and bit-identical results.
  auto real_buf = real_buffer(static_cast<size_t>(n) * n);
  auto cbuf = complex_buffer(static_cast<size_t>(half) * n);
  {
    std::lock_guard lock(planner_mutex());
    plans_->forward = fftw_plan_dft_r2c_2d(n, n, real_buf.get(), cbuf.get(), FFTW_ESTIMATE);
    plans_->inverse = fftw_plan_dft_c2r_2d(n, n, cbuf.get(), real_buf.get(), FFTW_ESTIMATE);
  }
}

SpectralPlan::~SpectralPlan() {
  if (!plans_) return;
  std::lock_guard lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->inverse) fftw_destroy_plan(plans_->inverse);
}

void SpectralPlan::forward(const double* in, std::complex<double>* out) const {
  const size_t real_size = static_cast<size_t>(spec_.n) * spec_.n;
  const size_t spec_size = static_cast<size_t>(spectrum_size());
  auto* cout = reinterpret_cast<fftw_complex*>(out);
  if (aligned(in) && aligned(out)) {
    // r2c leaves its input untouched.
    fftw_execute_dft_r2c(plans_->forward, const_cast<double*>(in), cout);
    return;
  }
  auto rbuf = real_buffer(real_size);
  auto cbuf = complex_buffer(spec_size);
  std::copy(in, in + real_size, rbuf.get());
  fftw_execute_dft_r2c(plans_->forward, rbuf.get(), cbuf.get());
  std::memcpy(cout, cbuf.get(), spec_size * sizeof(fftw_complex));
}

void SpectralPlan::inverse(std::complex<double>* in, double* out) const {
  const size_t real_size = static_cast<size_t>(spec_.n) * spec_.n;
  const size_t spec_size = static_cast<size_t>(spectrum_size());
  auto* cin = reinterpret_cast<fftw_complex*>(in);
  if (aligned(in) && aligned(out)) {
    fftw_execute_dft_c2r(plans_->inverse, cin, out);
    return;
  }
  auto rbuf = real_buffer(real_size);
  auto cbuf = complex_buffer(spec_size);
  std::memcpy(cbuf.get(), cin, spec_size * sizeof(fftw_complex));
  fftw_execute_dft_c2r(plans_->inverse, cbuf.get(), rbuf.get());
  std::copy(rbuf.get(), rbuf.get() + real_size, out);
}

GridField solve_shifted_laplacian(double alpha, double beta, const GridField& rhs,
                                  const SpectralPlan& plan) {
  require_same_grid(rhs.spec(), plan.spec());
  const auto& eig = plan.half_spectrum_eigenvalues();
  const Eigen::ArrayXd divisor = alpha - beta * eig;
  if ((divisor == 0.0).any() || !divisor.allFinite()) {
    throw SingularSystem("shifted Laplacian solve: alpha - beta*eig vanishes for some mode");
  }

  auto buffer = complex_buffer(static_cast<size_t>(plan.spectrum_size()));
  auto* spectrum = reinterpret_cast<std::complex<double>*>(buffer.get());
  plan.forward(rhs.values().data(), spectrum);
  const double n2 = static_cast<double>(rhs.n()) * static_cast<double>(rhs.n());
  for (Index k = 0; k < eig.size(); ++k) spectrum[k] /= divisor(k) * n2;

  GridField out(rhs.spec());
  plan.inverse(spectrum, out.values().data());
  return out;
}

GridField apply_shifted_laplacian(double alpha, double beta, const GridField& u) {
  GridField out = laplacian(u);
  out.values() = alpha * u.values() - beta * out.values();
  return out;
}

GridField apply_masked_jacobian(const GridField& mask, const GridField& v) {
  require_same_grid(mask.spec(), v.spec());
  GridField out = laplacian(mask * v);
  out.values() = v.values() - out.values();
  return out;
}

KrylovResult solve_masked_jacobian(const GridField& mask, const GridField& rhs,
                                   const SpectralPlan& plan, const KrylovConfig& cfg) {
  require_same_grid(mask.spec(), rhs.spec());
  if (!(cfg.tol > 0.0) || cfg.max_iter < 1 || cfg.restart < 1) {
    throw std::invalid_argument("KrylovConfig: tol > 0, max_iter >= 1, restart >= 1 required");
  }
  const GridSpec& spec = rhs.spec();
  const Index size = static_cast<Index>(spec.n) * spec.n;

  if ((mask.values() == 0.0).all()) return {rhs, 0, 0.0};

  using Vector = Eigen::VectorXd;
  auto as_vector = [&](const GridField& f) { return Eigen::Map<const Vector>(f.values().data(), size); };
  auto precondition = [&](const Vector& v) {
    GridField f(spec, Eigen::Map<const GridField::Array>(v.data(), spec.n, spec.n));
    return solve_shifted_laplacian(1.0, 1.0, f, plan);
  };

  const Vector b = as_vector(rhs);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return {GridField(spec), 0, 0.0};

  const int m = cfg.restart;
  Vector x = Vector::Zero(size);
  Vector r = b;
  double beta = bnorm;
  int iterations = 0;

  std::vector<Vector> basis;
  basis.reserve(static_cast<size_t>(m) + 1);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);

  while (true) {
    basis.clear();
    basis.push_back(r / beta);
    g.setZero();
    g(0) = beta;
    hess.setZero();
    int k = 0;
    for (; k < m && iterations < cfg.max_iter; ++k) {
      const GridField z = precondition(basis[k]);
      const GridField az = apply_masked_jacobian(mask, z);
      Vector w = as_vector(az);
      for (int i = 0; i <= k; ++i) {
        hess(i, k) = w.dot(basis[i]);
        w -= hess(i, k) * basis[i];
      }
      hess(k + 1, k) = w.norm();
      for (int i = 0; i < k; ++i) {
        const double t = cs(i) * hess(i, k) + sn(i) * hess(i + 1, k);
        hess(i + 1, k) = -sn(i) * hess(i, k) + cs(i) * hess(i + 1, k);
        hess(i, k) = t;
      }
      const double denom = std::hypot(hess(k, k), hess(k + 1, k));
      cs(k) = hess(k, k) / denom;
      sn(k) = hess(k + 1, k) / denom;
      hess(k, k) = denom;
      hess(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      ++iterations;

      const bool breakdown = w.norm() == 0.0;
      if (std::abs(g(k + 1)) <= cfg.tol * bnorm || breakdown) {
        ++k;
        break;
      }
      basis.push_back(w / w.norm());
    }

    const Vector y = hess.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    Vector correction = Vector::Zero(size);
    for (int i = 0; i < k; ++i) correction += y(i) * basis[i];
    x += as_vector(precondition(correction));

    GridField xf(spec, Eigen::Map<const GridField::Array>(x.data(), spec.n, spec.n));
    r = b - as_vector(apply_masked_jacobian(mask, xf));
    beta = r.norm();
    if (beta <= cfg.tol * bnorm) return {std::move(xf), iterations, beta / bnorm};
    if (iterations >= cfg.max_iter) throw NoConvergence(iterations, beta / bnorm);
  }
}

}  // namespace spimex
