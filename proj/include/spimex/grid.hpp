#pragma once

// Periodic uniform-grid discrete calculus.
//
// Fields are stored column-major with the x index i fastest, so that
// values(i, j) is the node (x_i, y_j). All index arithmetic wraps modulo n.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "spimex/errors.hpp"

namespace spimex {

using Index = Eigen::Index;

/// Square periodic domain [lo, hi)^2 with n nodes per axis.
struct GridSpec {
  int n = 0;
  double lo = 0.0;
  double hi = 1.0;

  GridSpec() = default;
  GridSpec(int n_, double lo_ = 0.0, double hi_ = 1.0) : n(n_), lo(lo_), hi(hi_) {
    if (n < 4) throw std::invalid_argument("GridSpec: n must be >= 4, got " + std::to_string(n));
    if (!(hi > lo)) throw std::invalid_argument("GridSpec: domain_max must exceed domain_min");
  }

  double h() const { return (hi - lo) / n; }
  double length() const { return hi - lo; }
  double area() const { return length() * length(); }
  double coord(Index i) const { return lo + static_cast<double>(i) * h(); }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.n == b.n && a.lo == b.lo && a.hi == b.hi;
  }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b) {
  if (!(a == b)) {
    throw SpecMismatch("grid mismatch: n=" + std::to_string(a.n) + " vs n=" + std::to_string(b.n));
  }
}

/// Cell-centred periodic scalar field.
template <typename Scalar>
class BasicGridField {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BasicGridField() = default;
  explicit BasicGridField(const GridSpec& spec, Scalar fill = Scalar(0))
      : spec_(spec), values_(Array::Constant(spec.n, spec.n, fill)) {}

  BasicGridField(const GridSpec& spec, Array values) : spec_(spec), values_(std::move(values)) {
    if (values_.rows() != spec_.n || values_.cols() != spec_.n) {
      throw SpecMismatch("GridField: value array does not match grid size");
    }
  }

  /// Samples f(x_i, y_j) at every node.
  template <typename F>
  static BasicGridField from_function(const GridSpec& spec, F&& f) {
    BasicGridField out(spec);
    for (Index j = 0; j < spec.n; ++j) {
      const double y = spec.coord(j);
      for (Index i = 0; i < spec.n; ++i) out.values_(i, j) = static_cast<Scalar>(f(spec.coord(i), y));
    }
    return out;
  }

  const GridSpec& spec() const { return spec_; }
  Index n() const { return spec_.n; }

  Array& values() { return values_; }
  const Array& values() const { return values_; }

  Scalar& operator()(Index i, Index j) { return values_(i, j); }
  Scalar operator()(Index i, Index j) const { return values_(i, j); }

  /// Periodic access; any integer index is folded into [0, n).
  Scalar wrapped(Index i, Index j) const {
    const Index n = spec_.n;
    return values_(((i % n) + n) % n, ((j % n) + n) % n);
  }

  Scalar min() const { return values_.minCoeff(); }
  Scalar max() const { return values_.maxCoeff(); }
  bool all_finite() const { return values_.allFinite(); }

  BasicGridField& operator+=(const BasicGridField& o) {
    require_same_grid(spec_, o.spec_);
    values_ += o.values_;
    return *this;
  }
  BasicGridField& operator-=(const BasicGridField& o) {
    require_same_grid(spec_, o.spec_);
    values_ -= o.values_;
    return *this;
  }
  BasicGridField& operator*=(Scalar s) {
    values_ *= s;
    return *this;
  }

  friend BasicGridField operator+(BasicGridField a, const BasicGridField& b) { return a += b; }
  friend BasicGridField operator-(BasicGridField a, const BasicGridField& b) { return a -= b; }
  friend BasicGridField operator*(BasicGridField a, Scalar s) { return a *= s; }
  friend BasicGridField operator*(Scalar s, BasicGridField a) { return a *= s; }
  friend BasicGridField operator-(BasicGridField a) {
    a.values_ = -a.values_;
    return a;
  }

  /// Pointwise product.
  friend BasicGridField operator*(const BasicGridField& a, const BasicGridField& b) {
    require_same_grid(a.spec_, b.spec_);
    return BasicGridField(a.spec_, a.values_ * b.values_);
  }

 private:
  GridSpec spec_;
  Array values_;
};

/// Face-centred pair: x_faces(i, j) sits at (i+1/2, j), y_faces(i, j) at (i, j+1/2).
template <typename Scalar>
class BasicFaceField {
 public:
  using Array = typename BasicGridField<Scalar>::Array;

  BasicFaceField() = default;
  explicit BasicFaceField(const GridSpec& spec, Scalar fill = Scalar(0))
      : spec_(spec),
        x_(Array::Constant(spec.n, spec.n, fill)),
        y_(Array::Constant(spec.n, spec.n, fill)) {}
  BasicFaceField(const GridSpec& spec, Array x, Array y)
      : spec_(spec), x_(std::move(x)), y_(std::move(y)) {
    if (x_.rows() != spec_.n || x_.cols() != spec_.n || y_.rows() != spec_.n || y_.cols() != spec_.n) {
      throw SpecMismatch("FaceField: face arrays do not match grid size");
    }
  }

  const GridSpec& spec() const { return spec_; }
  Array& x_faces() { return x_; }
  Array& y_faces() { return y_; }
  const Array& x_faces() const { return x_; }
  const Array& y_faces() const { return y_; }

  /// Pointwise product on matching faces.
  friend BasicFaceField operator*(const BasicFaceField& a, const BasicFaceField& b) {
    require_same_grid(a.spec_, b.spec_);
    return BasicFaceField(a.spec_, a.x_ * b.x_, a.y_ * b.y_);
  }

 private:
  GridSpec spec_;
  Array x_;
  Array y_;
};

using GridField = BasicGridField<double>;
using FaceField = BasicFaceField<double>;

// ---------------------------------------------------------------------------
// Difference operators

/// (D_x u, D_y u) on the faces.
template <typename Scalar>
BasicFaceField<Scalar> gradient(const BasicGridField<Scalar>& u) {
  const auto& v = u.values();
  const Index n = u.n();
  const Scalar inv_h = Scalar(1) / static_cast<Scalar>(u.spec().h());
  BasicFaceField<Scalar> g(u.spec());
  auto& gx = g.x_faces();
  auto& gy = g.y_faces();
  gx.topRows(n - 1) = (v.bottomRows(n - 1) - v.topRows(n - 1)) * inv_h;
  gx.row(n - 1) = (v.row(0) - v.row(n - 1)) * inv_h;
  gy.leftCols(n - 1) = (v.rightCols(n - 1) - v.leftCols(n - 1)) * inv_h;
  gy.col(n - 1) = (v.col(0) - v.col(n - 1)) * inv_h;
  return g;
}

/// d_x f^x + d_y f^y at the nodes.
template <typename Scalar>
BasicGridField<Scalar> divergence(const BasicFaceField<Scalar>& f) {
  const auto& fx = f.x_faces();
  const auto& fy = f.y_faces();
  const Index n = f.spec().n;
  const Scalar inv_h = Scalar(1) / static_cast<Scalar>(f.spec().h());
  BasicGridField<Scalar> out(f.spec());
  auto& o = out.values();
  o.bottomRows(n - 1) = fx.bottomRows(n - 1) - fx.topRows(n - 1);
  o.row(0) = fx.row(0) - fx.row(n - 1);
  o.rightCols(n - 1) += fy.rightCols(n - 1) - fy.leftCols(n - 1);
  o.col(0) += fy.col(0) - fy.col(n - 1);
  o *= inv_h;
  return out;
}

/// Five-point periodic Laplacian.
template <typename Scalar>
BasicGridField<Scalar> laplacian(const BasicGridField<Scalar>& u) {
  const auto& v = u.values();
  const Index n = u.n();
  const Scalar h = static_cast<Scalar>(u.spec().h());
  BasicGridField<Scalar> out(u.spec());
  auto& o = out.values();
  o = Scalar(-4) * v;
  o.topRows(n - 1) += v.bottomRows(n - 1);
  o.row(n - 1) += v.row(0);
  o.bottomRows(n - 1) += v.topRows(n - 1);
  o.row(0) += v.row(n - 1);
  o.leftCols(n - 1) += v.rightCols(n - 1);
  o.col(n - 1) += v.col(0);
  o.rightCols(n - 1) += v.leftCols(n - 1);
  o.col(0) += v.col(n - 1);
  o /= h * h;
  return out;
}

/// (A_x u, A_y u): arithmetic mean of the two nodes adjacent to each face.
template <typename Scalar>
BasicFaceField<Scalar> face_average(const BasicGridField<Scalar>& u) {
  const auto& v = u.values();
  const Index n = u.n();
  BasicFaceField<Scalar> a(u.spec());
  auto& ax = a.x_faces();
  auto& ay = a.y_faces();
  ax.topRows(n - 1) = Scalar(0.5) * (v.bottomRows(n - 1) + v.topRows(n - 1));
  ax.row(n - 1) = Scalar(0.5) * (v.row(0) + v.row(n - 1));
  ay.leftCols(n - 1) = Scalar(0.5) * (v.rightCols(n - 1) + v.leftCols(n - 1));
  ay.col(n - 1) = Scalar(0.5) * (v.col(0) + v.col(n - 1));
  return a;
}

/// div(coeff * grad u).
template <typename Scalar>
BasicGridField<Scalar> div_scaled_gradient(const BasicFaceField<Scalar>& coeff,
                                           const BasicGridField<Scalar>& u) {
  require_same_grid(coeff.spec(), u.spec());
  return divergence(coeff * gradient(u));
}

/// Flux operator phi -> div( A(phi / q) grad q ) for a fixed q = p + p0.
///
/// The singular ratio is formed at the nodes and then face-averaged, so the
/// face coefficient stays bounded by max(phi) / min(q).
template <typename Scalar>
class ChemotaxisFlux {
 public:
  ChemotaxisFlux(const BasicGridField<Scalar>& p, const BasicGridField<Scalar>& p0) : shifted_(p) {
    require_same_grid(p.spec(), p0.spec());
    shifted_ += p0;
    const Scalar qmin = shifted_.min();
    if (!(qmin > Scalar(0))) {
      throw DomainError("chemotaxis flux: p + p0 must be positive (min " +
                        std::to_string(static_cast<double>(qmin)) + ")");
    }
    grad_ = gradient(shifted_);
  }

  /// Same arithmetic as divergence(face_average(phi / q) * grad q), fused
  /// into one sweep over the columns with the periodic wrap hoisted out of
  /// the inner loop.
  BasicGridField<Scalar> apply(const BasicGridField<Scalar>& phi) const {
    require_same_grid(phi.spec(), shifted_.spec());
    const Index n = phi.n();
    const Scalar half(0.5);
    const Scalar inv_h = Scalar(1) / static_cast<Scalar>(phi.spec().h());
    const typename BasicGridField<Scalar>::Array r = phi.values() / shifted_.values();
    const auto& gx = grad_.x_faces();
    const auto& gy = grad_.y_faces();
    BasicGridField<Scalar> out(phi.spec());

    for (Index j = 0; j < n; ++j) {
      const Index jm = j == 0 ? n - 1 : j - 1;
      const Index jp = j == n - 1 ? 0 : j + 1;
      const Scalar* rc = &r(0, j);
      const Scalar* rn = &r(0, jp);
      const Scalar* rs = &r(0, jm);
      const Scalar* gxc = &gx(0, j);
      const Scalar* gyc = &gy(0, j);
      const Scalar* gys = &gy(0, jm);
      Scalar* o = &out.values()(0, j);
      auto node = [&](Index i, Index im, Index ip) {
        const Scalar east = half * (rc[ip] + rc[i]) * gxc[i];
        const Scalar west = half * (rc[i] + rc[im]) * gxc[im];
        const Scalar north = half * (rn[i] + rc[i]) * gyc[i];
        const Scalar south = half * (rc[i] + rs[i]) * gys[i];
        o[i] = ((east - west) + (north - south)) * inv_h;
      };
      node(0, n - 1, 1);
      for (Index i = 1; i < n - 1; ++i) node(i, i - 1, i + 1);
      node(n - 1, n - 2, 0);
    }
    return out;
  }

  const BasicGridField<Scalar>& shifted() const { return shifted_; }

 private:
  BasicGridField<Scalar> shifted_;
  BasicFaceField<Scalar> grad_;
};

/// div( A(phi / (p+p0)) grad(p+p0) ). Throws DomainError if p+p0 <= 0 anywhere.
template <typename Scalar>
BasicGridField<Scalar> chemotaxis_divergence(const BasicGridField<Scalar>& phi,
                                             const BasicGridField<Scalar>& p,
                                             const BasicGridField<Scalar>& p0) {
  return ChemotaxisFlux<Scalar>(p, p0).apply(phi);
}

// ---------------------------------------------------------------------------
// Inner products and norms

template <typename Scalar>
Scalar inner_product(const BasicGridField<Scalar>& u, const BasicGridField<Scalar>& v) {
  require_same_grid(u.spec(), v.spec());
  const Scalar h = static_cast<Scalar>(u.spec().h());
  return h * h * (u.values() * v.values()).sum();
}

template <typename Scalar>
Scalar inner_product(const BasicFaceField<Scalar>& f, const BasicFaceField<Scalar>& g) {
  require_same_grid(f.spec(), g.spec());
  const Scalar h = static_cast<Scalar>(f.spec().h());
  return h * h * ((f.x_faces() * g.x_faces()).sum() + (f.y_faces() * g.y_faces()).sum());
}

template <typename Scalar>
Scalar total_mass(const BasicGridField<Scalar>& u) {
  const Scalar h = static_cast<Scalar>(u.spec().h());
  return h * h * u.values().sum();
}

template <typename Scalar>
Scalar l2_norm(const BasicGridField<Scalar>& u) {
  using std::sqrt;
  return sqrt(inner_product(u, u));
}

template <typename Scalar>
Scalar l2_norm(const BasicFaceField<Scalar>& f) {
  using std::sqrt;
  return sqrt(inner_product(f, f));
}

template <typename Scalar>
Scalar h1_norm(const BasicGridField<Scalar>& u) {
  using std::sqrt;
  const auto g = gradient(u);
  return sqrt(inner_product(u, u) + inner_product(g, g));
}

template <typename Scalar>
Scalar linf_norm(const BasicGridField<Scalar>& u) {
  return u.values().abs().maxCoeff();
}

template <typename Scalar>
Scalar lp_norm(const BasicGridField<Scalar>& u, double p) {
  using std::pow;
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
  if (std::isinf(p)) return linf_norm(u);
  const Scalar h = static_cast<Scalar>(u.spec().h());
  return pow(h * h * u.values().abs().pow(static_cast<Scalar>(p)).sum(), static_cast<Scalar>(1.0 / p));
}

/// Euclidean combination over components: ||u||^2 = sum_k ||u_k||^2.
template <typename Scalar>
Scalar l2_norm(std::span<const BasicGridField<Scalar>> components) {
  using std::sqrt;
  Scalar acc(0);
  for (const auto& c : components) acc += inner_product(c, c);
  return sqrt(acc);
}

}  // namespace spimex
