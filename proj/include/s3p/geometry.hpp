#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "catalog.hpp"

namespace s3p {

// A Riemannian metric in chart coordinates.
struct MetricField {
  SymTensorField g;
  std::string label;
};

inline MetricField flat_metric() { return {identity_tensor(), "flat"}; }

// g = 4 |dx|^2 / (|x|^2 + 1)^2 = tau^-4 delta
inline MetricField round_metric() { return {pushforward_theta(identity_tensor()).with_label("round"), "round"}; }

inline MetricField perturbed_metric(const MetricField& g, const SymTensorField& h, double t) {
  return {g.g + t * h, g.label + "+th"};
}

// rho^-4 g
inline MetricField conformal_metric(const MetricField& g, const ScalarField& rho) {
  FieldInfo info = g.g.info();
  info.label = "rho^-4*" + g.label;
  auto gg = g.g;
  auto field = make_sym(
      [gg, rho](const auto& x) {
        auto r = rho(x);
        auto r2 = r * r;
        return (1.0 / (r2 * r2)) * gg(x);
      },
      info);
  return {field, info.label};
}

// Rank-generic tensor helpers on jets. Tensor<T,R> stores index i_1..i_R in base 3, i_1 most significant.

template <class T>
Tensor<T, 2> as_tensor(const Sym3<T>& s) {
  Tensor<T, 2> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = s(i, j);
  return r;
}

template <class T>
Sym3<T> as_sym(const Tensor<T, 2>& t) {
  Sym3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) r(i, j) = (t(i, j) + t(j, i)) * 0.5;
  return r;
}

namespace detail {

constexpr int pow3(int r) { return r == 0 ? 1 : 3 * pow3(r - 1); }

inline int digit(int idx, int slot, int R) { return (idx / pow3(R - 1 - slot)) % 3; }
inline int with_digit(int idx, int slot, int R, int v) {
  int p = pow3(R - 1 - slot);
  return idx + (v - (idx / p) % 3) * p;
}

}  // namespace detail

// Jet-level geometry of a metric around a point. Jets lose one order of
// validity per derivative.
template <int M>
struct LocalGeometry {
  using J = Jet<M>;
  Sym3<J> g, ginv;
  Tensor<J, 3> gamma;  // gamma(k,i,j) = Gamma^k_ij
  Mat3<J> frame;       // frame[i][a] = e_a^i, g-orthonormal, from the Cholesky factor
  bool euclidean = false;  // g is exactly delta: plain partials, identity frame

  explicit LocalGeometry(const Sym3<J>& metric) : g(metric) {
    euclidean = true;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j)
        for (int n = 0; n < J::size; ++n)
          if (g(i, j).c[n] != (i == j && n == 0 ? 1.0 : 0.0)) euclidean = false;
    if (euclidean) {
      ginv = g;
      for (int i = 0; i < 3; ++i)
        for (int a = 0; a < 3; ++a) frame[i][a] = J(i == a ? 1.0 : 0.0);
      return;
    }
    ginv = inverse(g);
    Tensor<J, 3> dg;  // dg(i,j,k) = d_k g_ij
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) dg(i, j, k) = d(g(i, j), k);
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
          J s;
          for (int l = 0; l < 3; ++l) s += ginv(k, l) * (dg(j, l, i) + dg(i, l, j) - dg(i, j, l));
          gamma(k, i, j) = 0.5 * s;
          gamma(k, j, i) = gamma(k, i, j);
        }
    // e = L^-T with g = L L^T
    auto L = cholesky(g);
    Mat3<J> Li{};
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 3; ++i) {
        J s(i == c ? 1.0 : 0.0);
        for (int k = 0; k < i; ++k) s -= L[i][k] * Li[k][c];
        Li[i][c] = s / L[i][i];
      }
    }
    for (int i = 0; i < 3; ++i)
      for (int a = 0; a < 3; ++a) frame[i][a] = Li[a][i];
  }

  // appends the derivative index last
  template <int R>
  Tensor<J, R + 1> covariant(const Tensor<J, R>& t) const {
    Tensor<J, R + 1> r;
    for (int idx = 0; idx < Tensor<J, R>::size; ++idx)
      for (int k = 0; k < 3; ++k) {
        J v = d(t.v[idx], k);
        if (euclidean) {
          r.v[3 * idx + k] = v;
          continue;
        }
        for (int s = 0; s < R; ++s) {
          const int is = detail::digit(idx, s, R);
          for (int m = 0; m < 3; ++m) v -= gamma(m, k, is) * t.v[detail::with_digit(idx, s, R, m)];
        }
        r.v[3 * idx + k] = v;
      }
    return r;
  }

  Tensor<J, 1> gradient(const J& f) const {
    Tensor<J, 1> r;
    for (int k = 0; k < 3; ++k) r(k) = d(f, k);
    return r;
  }

  Tensor<J, 2> hessian(const J& f) const { return covariant(gradient(f)); }

  J laplacian(const J& f) const {
    if (euclidean) return d(d(f, 0), 0) + d(d(f, 1), 1) + d(d(f, 2), 2);
    auto H = hessian(f);
    J s;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += ginv(i, j) * H(i, j);
    return s;
  }

  // components of a covariant tensor in the orthonormal frame
  template <int R>
  Tensor<J, R> to_frame(Tensor<J, R> t) const {
    if (euclidean) return t;
    for (int s = 0; s < R; ++s) {
      Tensor<J, R> r;
      for (int idx = 0; idx < Tensor<J, R>::size; ++idx) {
        const int a = detail::digit(idx, s, R);
        J v;
        for (int i = 0; i < 3; ++i) v += frame[i][a] * t.v[detail::with_digit(idx, s, R, i)];
        r.v[idx] = v;
      }
      t = r;
    }
    return t;
  }

  // R_ijkl = g(R(d_i, d_j) d_k, d_l) with R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y]
  Tensor<J, 4> riemann() const {
    Tensor<J, 4> up;  // R^m_ijk
    for (int m = 0; m < 3; ++m)
      for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
          for (int k = 0; k < 3; ++k) {
            J v = d(gamma(m, j, k), i) - d(gamma(m, i, k), j);
            for (int p = 0; p < 3; ++p) v += gamma(m, i, p) * gamma(p, j, k) - gamma(m, j, p) * gamma(p, i, k);
            up(m, i, j, k) = v;
            up(m, j, i, k) = -v;
          }
    Tensor<J, 4> r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) {
            J v;
            for (int m = 0; m < 3; ++m) v += g(l, m) * up(m, i, j, k);
            r(i, j, k, l) = v;
          }
    return r;
  }

  Sym3<J> ricci(const Tensor<J, 4>& riem) const {
    Sym3<J> r;
    for (int j = 0; j < 3; ++j)
      for (int k = j; k < 3; ++k) {
        J v;
        for (int i = 0; i < 3; ++i)
          for (int l = 0; l < 3; ++l) v += ginv(i, l) * riem(i, j, k, l);
        r(j, k) = v;
      }
    return r;
  }

  J trace(const Sym3<J>& s) const {
    J v;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) v += ginv(i, j) * s(i, j);
    return v;
  }

  J norm2(const Sym3<J>& s) const {
    J v;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) v += ginv(i, a) * ginv(j, b) * s(i, j) * s(a, b);
    return v;
  }

  J volume_density() const { return sqrt(det(g)); }
};

template <int M>
struct LocalCurvature {
  Tensor<Jet<M>, 4> riemann;
  Sym3<Jet<M>> ricci;
  Jet<M> scalar;
  Jet<M> ricci_norm2;
  Jet<M> laplacian_scalar;
  Jet<M> q;
};

template <int M>
LocalCurvature<M> local_curvature(const LocalGeometry<M>& geo) {
  LocalCurvature<M> c;
  if (geo.euclidean) return c;
  c.riemann = geo.riemann();
  c.ricci = geo.ricci(c.riemann);
  c.scalar = geo.trace(c.ricci);
  c.ricci_norm2 = geo.norm2(c.ricci);
  c.laplacian_scalar = geo.laplacian(c.scalar);
  c.q = -0.25 * c.laplacian_scalar - 2.0 * c.ricci_norm2 + (23.0 / 32.0) * c.scalar * c.scalar;
  return c;
}

// P phi = Delta^2 phi + 4 Rc^ij phi_ij - 5/4 R Delta phi + 3/4 <grad R, grad phi> - Q phi / 2
template <int M>
Jet<M> paneitz_jet(const LocalGeometry<M>& geo, const LocalCurvature<M>& c, const Jet<M>& phi) {
  auto H = geo.hessian(phi);
  Jet<M> lap;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) lap += geo.ginv(i, j) * H(i, j);
  Jet<M> rc_hess;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Jet<M> up;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) up += geo.ginv(i, a) * geo.ginv(j, b) * c.ricci(a, b);
      rc_hess += up * H(i, j);
    }
  Jet<M> grad;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) grad += geo.ginv(i, j) * d(c.scalar, i) * d(phi, j);
  return geo.laplacian(lap) + 4.0 * rc_hess - 1.25 * c.scalar * lap + 0.75 * grad - 0.5 * c.q * phi;
}

// value of paneitz_jet at the expansion point, without carrying jets through the products
template <int M>
double paneitz_value(const LocalGeometry<M>& geo, const LocalCurvature<M>& c, const Jet<M>& phi) {
  auto H = geo.hessian(phi);
  Jet<M> lap;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) lap += geo.ginv(i, j) * H(i, j);
  double r = geo.laplacian(lap).c[0];
  if (geo.euclidean) return r;
  double gi[3][3], rc[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      gi[i][j] = geo.ginv(i, j).c[0];
      rc[i][j] = c.ricci(i, j).c[0];
    }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double up = 0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) up += gi[i][a] * gi[j][b] * rc[a][b];
      r += 4.0 * up * H(i, j).c[0] + 0.75 * gi[i][j] * d(c.scalar, i).c[0] * d(phi, j).c[0];
    }
  return r - 1.25 * c.scalar.c[0] * lap.c[0] - 0.5 * c.q.c[0] * phi.c[0];
}

struct CurvaturePack {
  Tensor<double, 3> christoffel;  // (k,i,j) = Gamma^k_ij
  Tensor<double, 4> riemann;      // R_ijkl lowered
  Sym3<double> ricci;
  double scalar = 0;
  double ricci_norm2 = 0;
  double laplacian_scalar = 0;
  double q = 0;
};

inline constexpr int kCurvatureOrder = 4;

inline CurvaturePack curvature_pipeline(const MetricField& g, const Vec3d& x) {
  if (g.g.info().max_order < kCurvatureOrder) throw std::domain_error("derivative order exceeds availability");
  LocalGeometry<kCurvatureOrder> geo(g.g.jet<kCurvatureOrder>(x));
  auto c = local_curvature(geo);
  CurvaturePack p;
  for (int i = 0; i < 27; ++i) p.christoffel.v[i] = geo.gamma.v[i].c[0];
  for (int i = 0; i < 81; ++i) p.riemann.v[i] = c.riemann.v[i].c[0];
  for (int i = 0; i < 6; ++i) p.ricci.v[i] = c.ricci.v[i].c[0];
  p.scalar = c.scalar.c[0];
  p.ricci_norm2 = c.ricci_norm2.c[0];
  p.laplacian_scalar = c.laplacian_scalar.c[0];
  p.q = c.q.c[0];
  return p;
}

inline double laplace_beltrami(const MetricField& g, const ScalarField& phi, const Vec3d& x) {
  LocalGeometry<2> geo(g.g.jet<2>(x));
  return geo.laplacian(phi.jet<2>(x)).c[0];
}

inline double paneitz_apply_exact(const MetricField& g, const ScalarField& phi, const Vec3d& x) {
  if (g.g.info().max_order < kCurvatureOrder || phi.info().max_order < 4)
    throw std::domain_error("derivative order exceeds availability");
  LocalGeometry<4> geo(g.g.jet<4>(x));
  auto c = local_curvature(geo);
  return paneitz_jet(geo, c, phi.jet<4>(x)).c[0];
}

// max over samples of |P_{rho^-4 g} phi - rho^7 P_g(rho phi)|
inline double conformal_covariance_residual(const MetricField& g, const ScalarField& rho, const ScalarField& phi,
                                            const std::vector<Vec3d>& samples) {
  auto rho_phi = rho * phi;
  auto gc = conformal_metric(g, rho);
  double worst = 0;
  for (const auto& x : samples) {
    double r = rho(x);
    if (!(r > 0)) throw std::invalid_argument("conformal factor must be positive");
    double lhs = paneitz_apply_exact(gc, phi, x);
    double rhs = std::pow(r, 7) * paneitz_apply_exact(g, rho_phi, x);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

// |2 div Rc - dR|_g at x
inline double bianchi_residual(const MetricField& g, const Vec3d& x) {
  LocalGeometry<3> geo(g.g.jet<3>(x));
  auto riem = geo.riemann();
  auto rc = geo.ricci(riem);
  auto R = geo.trace(rc);
  auto drc = geo.covariant(as_tensor(rc));
  std::array<double, 3> v{};
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) s += geo.ginv(j, k).c[0] * drc(i, j, k).c[0];
    v[i] = 2 * s - d(R, i).c[0];
  }
  double n = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) n += geo.ginv(i, j).c[0] * v[i] * v[j];
  return std::sqrt(std::max(n, 0.0));
}

}  // namespace s3p
