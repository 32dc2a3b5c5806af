#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "quadrature.hpp"

namespace s3p {

// Coefficients of t^0, t^1, t^2.
template <class T>
using Series = std::array<T, 3>;

template <class T>
Series<T> series_mul(const Series<T>& a, const Series<T>& b) {
  return {a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[1] * b[1] + a[2] * b[0]};
}

template <class T>
Series<T> series_add(const Series<T>& a, const Series<T>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

template <class T>
Series<T> series_scale(double s, const Series<T>& a) {
  return {s * a[0], s * a[1], s * a[2]};
}

// Everything the appendix formulas need at one point: covariant derivatives
// of h with respect to g, in the g-orthonormal Cholesky frame. h_ijk is
// nabla_k h_ij and h_ijkl is nabla_l nabla_k h_ij.
template <int M>
struct PerturbationContext {
  using J = Jet<M>;
  using T1 = Tensor<J, 1>;
  using T2 = Tensor<J, 2>;
  using T3 = Tensor<J, 3>;
  using T4 = Tensor<J, 4>;

  LocalGeometry<M> geo;
  LocalCurvature<M> curv;
  T2 h;
  T3 h3;
  T4 h4;
  T2 rc;
  J R;
  T1 dR;
  T2 ddR;

  J trh;
  T1 V;   // 2 h_ijj - (tr h)_i
  T3 C;   // C(i,j,k) = h_ikj + h_jki - h_ijk
  J S;    // h_ijij - Delta tr h - Rc_ij h_ij
  T1 dS;
  T2 ddS;
  T2 Lh;  // h_ikjk + h_jkik - (tr h)_ij - Delta h_ij
  T2 W;   // Delta h_ij + (tr h)_ij - h_ikjk - h_ikkj
  T2 h2;  // h_ik h_jk
  J Wh, C2, V2, rch2;

  PerturbationContext(const Sym3<J>& g, const Sym3<J>& hc) : geo(g), curv(local_curvature(geo)) {
    auto ht = as_tensor(hc);
    auto d1 = geo.covariant(ht);
    auto d2 = geo.covariant(d1);
    h = geo.to_frame(ht);
    h3 = geo.to_frame(d1);
    h4 = geo.to_frame(d2);
    rc = geo.to_frame(as_tensor(curv.ricci));
    R = curv.scalar;
    dR = grad(R);
    ddR = hess(R);

    for (int i = 0; i < 3; ++i) trh += h(i, i);
    for (int i = 0; i < 3; ++i) {
      J s;
      for (int j = 0; j < 3; ++j) s += 2.0 * h3(i, j, j) - h3(j, j, i);
      V(i) = s;
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) C(i, j, k) = h3(i, k, j) + h3(j, k, i) - h3(i, j, k);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        S += h4(i, j, i, j) - h4(i, i, j, j) - rc(i, j) * h(i, j);
        J l, w, q;
        for (int k = 0; k < 3; ++k) {
          l += h4(i, k, j, k) + h4(j, k, i, k) - h4(k, k, i, j) - h4(i, j, k, k);
          w += h4(i, j, k, k) + h4(k, k, i, j) - h4(i, k, j, k) - h4(i, k, k, j);
          q += h(i, k) * h(j, k);
        }
        Lh(i, j) = l;
        W(i, j) = w;
        h2(i, j) = q;
      }
    dS = grad(S);
    ddS = hess(S);
    for (int i = 0; i < 3; ++i) {
      V2 += V(i) * V(i);
      for (int j = 0; j < 3; ++j) {
        Wh += W(i, j) * h(i, j);
        rch2 += rc(i, j) * h2(i, j);
        for (int k = 0; k < 3; ++k) C2 += C(i, j, k) * C(i, j, k);
      }
    }
  }

  T1 grad(const J& f) const { return geo.to_frame(geo.gradient(f)); }
  T2 hess(const J& f) const { return geo.to_frame(geo.hessian(f)); }
  J lap(const J& f) const { return geo.laplacian(f); }

  // (2 h_ikj - h_ijk) contracted against a frame vector on k
  J twohmh(int i, int j, int k) const { return 2.0 * h3(i, k, j) - h3(i, j, k); }
};

// The named quantities of the appendix.
enum class Quantity {
  measure,
  christoffel,
  riemann,
  ricci,
  scalar,
  laplacian,
  scalar_squared,
  ricci_norm2,
  laplacian_scalar,
  q,
  paneitz
};

inline const std::vector<Quantity>& all_quantities() {
  static const std::vector<Quantity> q = {Quantity::measure,        Quantity::christoffel, Quantity::riemann,
                                          Quantity::ricci,          Quantity::scalar,      Quantity::laplacian,
                                          Quantity::scalar_squared, Quantity::ricci_norm2, Quantity::laplacian_scalar,
                                          Quantity::q,              Quantity::paneitz};
  return q;
}

inline std::string quantity_name(Quantity q) {
  switch (q) {
    case Quantity::measure: return "measure";
    case Quantity::christoffel: return "christoffel";
    case Quantity::riemann: return "riemann";
    case Quantity::ricci: return "ricci";
    case Quantity::scalar: return "scalar";
    case Quantity::laplacian: return "laplacian";
    case Quantity::scalar_squared: return "scalar_squared";
    case Quantity::ricci_norm2: return "ricci_norm2";
    case Quantity::laplacian_scalar: return "laplacian_scalar";
    case Quantity::q: return "q";
    case Quantity::paneitz: return "paneitz";
  }
  return "?";
}

inline std::optional<Quantity> parse_quantity(const std::string& s) {
  for (auto q : all_quantities())
    if (quantity_name(q) == s) return q;
  return std::nullopt;
}

inline bool needs_phi(Quantity q) { return q == Quantity::laplacian || q == Quantity::paneitz; }

namespace expansion_detail {

template <int M>
using Ctx = PerturbationContext<M>;

template <int M>
Series<Tensor<Jet<M>, 3>> christoffel(const Ctx<M>& c) {
  Series<Tensor<Jet<M>, 3>> s;
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        s[1](k, i, j) = 0.5 * c.C(i, j, k);
        Jet<M> v;
        for (int a = 0; a < 3; ++a) v += c.C(i, j, a) * c.h(k, a);
        s[2](k, i, j) = -0.5 * v;
      }
  return s;
}

// layout (l,i,j,k) for R^l_ijk
template <int M>
Series<Tensor<Jet<M>, 4>> riemann(const Ctx<M>& c) {
  Series<Tensor<Jet<M>, 4>> s;
  const auto& h4 = c.h4;
  auto F = [&](int i, int j, int k, int l) {
    return h4(i, l, k, j) + h4(j, k, l, i) + h4(k, l, i, j) - h4(j, l, k, i) - h4(i, k, l, j) - h4(k, l, j, i);
  };
  auto riem = c.geo.to_frame(c.curv.riemann);
  for (int l = 0; l < 3; ++l)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
          s[0](l, i, j, k) = -riem(i, j, k, l);
          s[1](l, i, j, k) = 0.5 * F(i, j, k, l);
          Jet<M> v;
          for (int a = 0; a < 3; ++a)
            v += -0.5 * F(i, j, k, a) * c.h(l, a) + 0.25 * c.C(i, l, a) * c.C(j, k, a) -
                 0.25 * c.C(i, k, a) * c.C(j, l, a);
          s[2](l, i, j, k) = v;
        }
  return s;
}

template <int M>
Series<Tensor<Jet<M>, 2>> ricci(const Ctx<M>& c) {
  Series<Tensor<Jet<M>, 2>> s;
  const auto& h4 = c.h4;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      s[0](i, j) = c.rc(i, j);
      s[1](i, j) = 0.5 * c.Lh(i, j);
      Jet<M> v;
      for (int k = 0; k < 3; ++k) {
        for (int l = 0; l < 3; ++l) {
          v += -0.5 * (h4(i, k, j, l) + h4(j, k, i, l) - h4(k, l, j, i) - h4(i, j, k, l)) * c.h(k, l);
          v += 0.25 * c.C(i, l, k) * c.C(j, l, k);
        }
        v += -0.25 * c.C(i, j, k) * c.V(k);
      }
      s[2](i, j) = v;
    }
  return s;
}

template <int M>
Series<Jet<M>> scalar(const Ctx<M>& c) {
  return {c.R, c.S, c.Wh + 0.25 * c.C2 - 0.25 * c.V2 + c.rch2};
}

// a.8 applied to an arbitrary scalar jet psi
template <int M>
Series<Jet<M>> laplacian(const Ctx<M>& c, const Jet<M>& psi) {
  auto g = c.grad(psi);
  auto H = c.hess(psi);
  Series<Jet<M>> s;
  for (int i = 0; i < 3; ++i) s[0] += H(i, i);
  for (int i = 0; i < 3; ++i) {
    s[1] += -0.5 * c.V(i) * g(i);
    for (int j = 0; j < 3; ++j) {
      s[1] += -1.0 * c.h(i, j) * H(i, j);
      s[2] += 0.5 * c.V(i) * c.h(i, j) * g(j) + c.h2(i, j) * H(i, j);
      for (int k = 0; k < 3; ++k) s[2] += 0.5 * c.twohmh(i, j, k) * c.h(i, j) * g(k);
    }
  }
  return s;
}

template <int M>
Series<Jet<M>> scalar_squared(const Ctx<M>& c) {
  const auto& R = c.R;
  return {R * R, 2.0 * R * c.S,
          c.S * c.S + 2.0 * R * c.Wh + 0.5 * R * c.C2 - 0.5 * R * c.V2 + 2.0 * R * c.rch2};
}

template <int M>
Series<Jet<M>> ricci_norm2(const Ctx<M>& c) {
  const auto& rc = c.rc;
  const auto& h = c.h;
  const auto& h4 = c.h4;
  Series<Jet<M>> s;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      s[0] += rc(i, j) * rc(i, j);
      s[2] += 0.25 * c.Lh(i, j) * c.Lh(i, j);
      Jet<M> first;
      for (int k = 0; k < 3; ++k) first += 2.0 * h4(i, k, j, k) - h4(k, k, i, j) - h4(i, j, k, k);
      s[1] += rc(i, j) * first;
      for (int k = 0; k < 3; ++k) {
        s[1] += -2.0 * rc(i, j) * rc(i, k) * h(j, k);
        s[2] += -2.0 * rc(i, j) * h(i, k) * c.Lh(j, k);
        s[2] += -0.5 * rc(i, j) * c.twohmh(i, j, k) * c.V(k);
        s[2] += 2.0 * rc(i, j) * rc(i, k) * c.h2(j, k);
        for (int l = 0; l < 3; ++l) {
          s[2] += -1.0 * rc(i, j) * h(k, l) * (2.0 * h4(i, k, j, l) - h4(k, l, i, j) - h4(i, j, k, l));
          s[2] += 0.5 * rc(i, j) * c.C(i, l, k) * c.C(j, l, k);
          s[2] += rc(i, j) * rc(k, l) * h(i, k) * h(j, l);
        }
      }
    }
  return s;
}

template <int M>
Series<Jet<M>> laplacian_scalar(const Ctx<M>& c) {
  Series<Jet<M>> s;
  s[0] = c.curv.laplacian_scalar;
  s[1] = c.lap(c.S);
  s[2] = c.lap(c.Wh) + 0.25 * c.lap(c.C2) - 0.25 * c.lap(c.V2) + c.lap(c.rch2);
  for (int i = 0; i < 3; ++i) {
    s[1] += -0.5 * c.V(i) * c.dR(i);
    s[2] += -0.5 * c.V(i) * c.dS(i);
    for (int j = 0; j < 3; ++j) {
      s[1] += -1.0 * c.h(i, j) * c.ddR(i, j);
      s[2] += -1.0 * c.h(i, j) * c.ddS(i, j) + 0.5 * c.V(i) * c.h(i, j) * c.dR(j) + c.h2(i, j) * c.ddR(i, j);
      for (int k = 0; k < 3; ++k) s[2] += 0.5 * c.twohmh(i, j, k) * c.h(i, j) * c.dR(k);
    }
  }
  return s;
}

// the displayed groups of the Q expansion, first and second order
template <int M>
Series<Jet<M>> q(const Ctx<M>& c) {
  const auto& rc = c.rc;
  const auto& h = c.h;
  const auto& h4 = c.h4;
  const auto& R = c.R;
  Series<Jet<M>> s;
  s[0] = c.curv.q;
  s[1] = -0.25 * c.lap(c.S) + (23.0 / 16.0) * R * c.S;
  s[2] = -0.25 * c.lap(c.Wh) - (1.0 / 16.0) * c.lap(c.C2) + (1.0 / 16.0) * c.lap(c.V2) - 0.25 * c.lap(c.rch2) +
         (23.0 / 32.0) * c.S * c.S + (23.0 / 16.0) * R * c.Wh + (23.0 / 64.0) * R * c.C2 -
         (23.0 / 64.0) * R * c.V2 + (23.0 / 16.0) * R * c.rch2;
  for (int i = 0; i < 3; ++i) {
    s[1] += 0.125 * c.V(i) * c.dR(i);
    s[2] += 0.125 * c.V(i) * c.dS(i);
    for (int j = 0; j < 3; ++j) {
      Jet<M> first;
      for (int k = 0; k < 3; ++k) first += 2.0 * h4(i, k, j, k) - h4(k, k, i, j) - h4(i, j, k, k);
      s[1] += -2.0 * rc(i, j) * first + 0.25 * h(i, j) * c.ddR(i, j);
      s[2] += 0.25 * h(i, j) * c.ddS(i, j) - 0.5 * c.Lh(i, j) * c.Lh(i, j);
      s[2] += -0.125 * c.V(i) * h(i, j) * c.dR(j) - 0.25 * c.h2(i, j) * c.ddR(i, j);
      for (int k = 0; k < 3; ++k) {
        s[1] += 4.0 * rc(i, j) * rc(i, k) * h(j, k);
        s[2] += 4.0 * rc(i, j) * h(i, k) * c.Lh(j, k);
        s[2] += rc(i, j) * c.twohmh(i, j, k) * c.V(k);
        s[2] += -0.125 * c.twohmh(i, j, k) * h(i, j) * c.dR(k);
        s[2] += -4.0 * rc(i, j) * rc(i, k) * c.h2(j, k);
        for (int l = 0; l < 3; ++l) {
          s[2] += 2.0 * rc(i, j) * h(k, l) * (2.0 * h4(i, k, j, l) - h4(k, l, i, j) - h4(i, j, k, l));
          s[2] += -1.0 * rc(i, j) * c.C(i, l, k) * c.C(j, l, k);
          s[2] += -2.0 * rc(i, j) * rc(k, l) * h(i, k) * h(j, l);
        }
      }
    }
  }
  return s;
}

inline constexpr int kP1Groups = 5;

// P^(1) phi at the expansion point, one entry per displayed line of the formula
template <int M>
std::array<double, kP1Groups> p1_groups(const Ctx<M>& c, const Jet<M>& phi) {
  auto v = [](const Jet<M>& j) { return j.c[0]; };
  auto dphi = c.grad(phi);
  auto H = c.hess(phi);
  Jet<M> lapphi = c.lap(phi);
  auto dlap = c.grad(lapphi);
  auto Hlap = c.hess(lapphi);
  Jet<M> hH, Vd;
  for (int i = 0; i < 3; ++i) {
    Vd += c.V(i) * dphi(i);
    for (int j = 0; j < 3; ++j) hH += c.h(i, j) * H(i, j);
  }
  double h[3][3], rc[3][3], Hv[3][3], dp[3], Vv[3], dR[3], dS[3], A[3][3];
  for (int i = 0; i < 3; ++i) {
    dp[i] = v(dphi(i));
    Vv[i] = v(c.V(i));
    dR[i] = v(c.dR(i));
    dS[i] = v(c.dS(i));
    for (int j = 0; j < 3; ++j) {
      h[i][j] = v(c.h(i, j));
      rc[i][j] = v(c.rc(i, j));
      Hv[i][j] = v(H(i, j));
      A[i][j] = 0;
      for (int k = 0; k < 3; ++k) A[i][j] += v(c.h4(i, k, j, k)) * 2.0 - v(c.h4(i, j, k, k)) - v(c.h4(k, k, i, j));
    }
  }
  const double R = v(c.R), S = v(c.S), ph = v(phi), Vdv = v(Vd);
  std::array<double, kP1Groups> g{};
  g[0] = -v(c.lap(hH)) - 0.5 * v(c.lap(Vd));
  g[2] = -1.25 * S * v(lapphi) + 0.625 * R * Vdv;
  g[3] = 0.125 * v(c.lap(c.S)) * ph;
  g[4] = (-23.0 / 32.0) * R * S * ph;
  for (int i = 0; i < 3; ++i) {
    g[0] += -0.5 * Vv[i] * v(dlap(i));
    g[3] += 0.75 * dS[i] * dp[i];
    g[4] += -0.0625 * Vv[i] * dR[i] * ph;
    for (int j = 0; j < 3; ++j) {
      g[0] += -h[i][j] * v(Hlap(i, j));
      g[1] += 2.0 * A[i][j] * Hv[i][j] + 1.25 * R * h[i][j] * Hv[i][j];
      g[3] += -0.75 * h[i][j] * dR[i] * dp[j];
      g[4] += -0.125 * h[i][j] * v(c.ddR(i, j)) * ph + rc[i][j] * A[i][j] * ph;
      for (int k = 0; k < 3; ++k) {
        g[1] += -8.0 * rc[i][j] * h[i][k] * Hv[j][k];
        g[2] += -2.0 * rc[i][j] * v(c.twohmh(i, j, k)) * dp[k];
        g[4] += -2.0 * rc[i][j] * rc[i][k] * h[j][k] * ph;
      }
    }
  }
  return g;
}

// sphere form: Rc = 2g and R = 6 folded in
template <int M>
Jet<M> p1_sphere(const Ctx<M>& c, const Jet<M>& phi) {
  const auto& h = c.h;
  const auto& h4 = c.h4;
  auto dphi = c.grad(phi);
  auto H = c.hess(phi);
  Jet<M> lapphi = c.lap(phi);
  auto dlap = c.grad(lapphi);
  auto Hlap = c.hess(lapphi);
  // S' = h_ijij - Delta tr h - 2 tr h
  Jet<M> Sp;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) Sp += h4(i, j, i, j) - h4(i, i, j, j);
  Sp += -2.0 * c.trh;
  auto dSp = c.grad(Sp);
  Jet<M> hH, Vd;
  for (int i = 0; i < 3; ++i) {
    Vd += c.V(i) * dphi(i);
    for (int j = 0; j < 3; ++j) hH += h(i, j) * H(i, j);
  }
  Jet<M> r = -1.0 * c.lap(hH) - 0.5 * c.lap(Vd) - 1.25 * Sp * lapphi - 0.25 * Vd + 0.125 * c.lap(Sp) * phi -
             (5.0 / 16.0) * Sp * phi;
  for (int i = 0; i < 3; ++i) {
    r += -0.5 * c.V(i) * dlap(i) + 0.75 * dSp(i) * dphi(i);
    for (int j = 0; j < 3; ++j) {
      r += -1.0 * h(i, j) * Hlap(i, j) - 8.5 * h(i, j) * H(i, j);
      Jet<M> A;
      for (int k = 0; k < 3; ++k) A += 2.0 * h4(i, k, j, k) - h4(i, j, k, k) - h4(k, k, i, j);
      r += 2.0 * A * H(i, j);
    }
  }
  return r;
}

template <int M>
Jet<M> p2_one(const Ctx<M>& c) {
  const auto& rc = c.rc;
  const auto& h = c.h;
  const auto& h4 = c.h4;
  const auto& R = c.R;
  Jet<M> r = 0.125 * c.lap(c.Wh) + (1.0 / 32.0) * c.lap(c.C2) - (1.0 / 32.0) * c.lap(c.V2) + 0.125 * c.lap(c.rch2) -
             (23.0 / 64.0) * c.S * c.S - (23.0 / 32.0) * R * c.Wh - (23.0 / 128.0) * R * c.C2 +
             (23.0 / 128.0) * R * c.V2 - (23.0 / 32.0) * R * c.rch2;
  for (int i = 0; i < 3; ++i) {
    r += -0.0625 * c.V(i) * c.dS(i);
    for (int j = 0; j < 3; ++j) {
      r += -0.125 * h(i, j) * c.ddS(i, j) + 0.25 * c.Lh(i, j) * c.Lh(i, j);
      r += 0.125 * (c.h2(i, j) * c.ddR(i, j) + 0.5 * c.V(i) * h(i, j) * c.dR(j));
      for (int k = 0; k < 3; ++k) {
        r += -2.0 * rc(i, j) * h(i, k) * c.Lh(j, k);
        r += -0.5 * rc(i, j) * c.twohmh(i, j, k) * c.V(k);
        r += 0.0625 * c.twohmh(i, j, k) * h(i, j) * c.dR(k);
        r += 2.0 * rc(i, j) * rc(i, k) * c.h2(j, k);
        for (int l = 0; l < 3; ++l) {
          r += -1.0 * rc(i, j) * h(k, l) * (2.0 * h4(i, k, j, l) - h4(k, l, i, j) - h4(i, j, k, l));
          r += 0.5 * rc(i, j) * c.C(i, l, k) * c.C(j, l, k);
          r += rc(i, j) * rc(k, l) * h(i, k) * h(j, l);
        }
      }
    }
  }
  return r;
}

// P_{g+th} phi through order t^2, composed from the expansions of each ingredient of
// P = Delta^2 + 4 Rc^ij nabla_ij - 5/4 R Delta + 3/4 <dR, d> - Q/2.
template <int M>
Series<Jet<M>> paneitz_series(const Ctx<M>& c, const Jet<M>& phi) {
  using J = Jet<M>;
  auto lap_phi = laplacian(c, phi);
  Series<J> bilap;
  for (int a = 0; a < 3; ++a) {
    auto la = laplacian(c, lap_phi[a]);
    for (int b = 0; a + b < 3; ++b) bilap[a + b] += la[b];
  }
  auto dphi = c.grad(phi);
  auto H = c.hess(phi);
  auto gam = christoffel(c);
  auto ric = ricci(c);
  auto sc = scalar(c);
  auto qq = q(c);
  // g~^-1 = delta - t h + t^2 h^2
  auto ginv = [&](int i, int j) {
    return Series<J>{J(i == j ? 1.0 : 0.0), -1.0 * c.h(i, j), c.h2(i, j)};
  };
  Series<J> rc_hess;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Series<J> up;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          Series<J> rab{ric[0](a, b), ric[1](a, b), ric[2](a, b)};
          up = series_add(up, series_mul(series_mul(ginv(i, a), ginv(j, b)), rab));
        }
      Series<J> hess{H(i, j), J(), J()};
      for (int k = 0; k < 3; ++k) {
        hess[1] += -1.0 * gam[1](k, i, j) * dphi(k);
        hess[2] += -1.0 * gam[2](k, i, j) * dphi(k);
      }
      rc_hess = series_add(rc_hess, series_mul(up, hess));
    }
  Series<Tensor<J, 1>> dsc{c.grad(sc[0]), c.grad(sc[1]), c.grad(sc[2])};
  Series<J> grad_term;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Series<J> di{dsc[0](i), dsc[1](i), dsc[2](i)};
      Series<J> dj{dphi(j), J(), J()};
      grad_term = series_add(grad_term, series_mul(series_mul(ginv(i, j), di), dj));
    }
  Series<J> phis{phi, J(), J()};
  Series<J> r = bilap;
  r = series_add(r, series_scale(4.0, rc_hess));
  r = series_add(r, series_scale(-1.25, series_mul(sc, lap_phi)));
  r = series_add(r, series_scale(0.75, grad_term));
  r = series_add(r, series_scale(-0.5, series_mul(qq, phis)));
  return r;
}

}  // namespace expansion_detail

inline constexpr int kExpansionOrder = 4;

// Builds the context for background g and perturbation h at x.
inline PerturbationContext<kExpansionOrder> perturbation_context(const MetricField& g, const SymTensorField& h,
                                                                 const Vec3d& x) {
  if (g.g.info().max_order < kExpansionOrder || h.info().max_order < kExpansionOrder)
    throw std::domain_error("derivative order exceeds availability");
  return PerturbationContext<kExpansionOrder>(g.g.jet<kExpansionOrder>(x), h.jet<kExpansionOrder>(x));
}

inline Series<double> values(const Series<Jet<kExpansionOrder>>& s) { return {s[0].c[0], s[1].c[0], s[2].c[0]}; }

inline Series<double> measure_expansion(const MetricField& g, const SymTensorField& h, const Vec3d& x) {
  LocalGeometry<1> geo(g.g.jet<1>(x));
  auto hf = geo.to_frame(as_tensor(h.jet<1>(x)));
  double tr = 0, n2 = 0;
  for (int i = 0; i < 3; ++i) {
    tr += hf(i, i).c[0];
    for (int j = 0; j < 3; ++j) n2 += sqr(hf(i, j).c[0]);
  }
  return {1.0, 0.5 * tr, tr * tr / 8 - n2 / 4};
}

inline Series<double> q_expansion(const MetricField& g, const SymTensorField& h, const Vec3d& x) {
  auto c = perturbation_context(g, h, x);
  return values(expansion_detail::q(c));
}

inline double p1_apply(const MetricField& g, const SymTensorField& h, const ScalarField& phi, const Vec3d& x) {
  auto c = perturbation_context(g, h, x);
  auto groups = expansion_detail::p1_groups(c, phi.jet<kExpansionOrder>(x));
  double s = 0;
  for (double v : groups) s += v;
  return s;
}

inline std::array<double, expansion_detail::kP1Groups> p1_group_values(const MetricField& g, const SymTensorField& h,
                                                                       const ScalarField& phi, const Vec3d& x) {
  auto c = perturbation_context(g, h, x);
  return expansion_detail::p1_groups(c, phi.jet<kExpansionOrder>(x));
}

inline double p1_sphere_apply(const SymTensorField& h, const ScalarField& phi, const Vec3d& x) {
  auto c = perturbation_context(round_metric(), h, x);
  return expansion_detail::p1_sphere(c, phi.jet<kExpansionOrder>(x)).c[0];
}

inline double p2_one(const MetricField& g, const SymTensorField& h, const Vec3d& x) {
  auto c = perturbation_context(g, h, x);
  return expansion_detail::p2_one(c).c[0];
}

inline Series<double> paneitz_expansion(const MetricField& g, const SymTensorField& h, const ScalarField& phi,
                                        const Vec3d& x) {
  auto c = perturbation_context(g, h, x);
  return values(expansion_detail::paneitz_series(c, phi.jet<kExpansionOrder>(x)));
}

// Expansion coefficients of a quantity at x, flattened in the layout of exact_quantity.
inline Series<std::vector<double>> expand_quantity(Quantity q, const MetricField& g, const SymTensorField& h,
                                                   const ScalarField* phi, const Vec3d& x) {
  using namespace expansion_detail;
  if (needs_phi(q) && !phi) throw std::invalid_argument("quantity needs a test function");
  Series<std::vector<double>> out;
  auto put_scalar = [&](const Series<Jet<kExpansionOrder>>& s) {
    for (int k = 0; k < 3; ++k) out[k] = {s[k].c[0]};
  };
  if (q == Quantity::measure) {
    auto m = measure_expansion(g, h, x);
    for (int k = 0; k < 3; ++k) out[k] = {m[k]};
    return out;
  }
  auto c = perturbation_context(g, h, x);
  switch (q) {
    case Quantity::christoffel: {
      auto s = christoffel(c);
      for (int k = 0; k < 3; ++k)
        for (const auto& v : s[k].v) out[k].push_back(v.c[0]);
      break;
    }
    case Quantity::riemann: {
      auto s = riemann(c);
      for (int k = 0; k < 3; ++k)
        for (const auto& v : s[k].v) out[k].push_back(v.c[0]);
      break;
    }
    case Quantity::ricci: {
      auto s = ricci(c);
      for (int k = 0; k < 3; ++k)
        for (const auto& v : s[k].v) out[k].push_back(v.c[0]);
      break;
    }
    case Quantity::scalar: put_scalar(scalar(c)); break;
    case Quantity::laplacian: put_scalar(laplacian(c, phi->jet<kExpansionOrder>(x))); break;
    case Quantity::scalar_squared: put_scalar(scalar_squared(c)); break;
    case Quantity::ricci_norm2: put_scalar(ricci_norm2(c)); break;
    case Quantity::laplacian_scalar: put_scalar(laplacian_scalar(c)); break;
    case Quantity::q: put_scalar(expansion_detail::q(c)); break;
    case Quantity::paneitz: {
      auto phij = phi->jet<kExpansionOrder>(x);
      auto s = paneitz_series(c, phij);
      auto groups = p1_groups(c, phij);
      double p1 = 0;
      for (double v : groups) p1 += v;
      // first order from the closed form, second from the composition
      out[0] = {s[0].c[0]};
      out[1] = {p1};
      out[2] = {s[2].c[0]};
      break;
    }
    default: break;
  }
  return out;
}

// Exact value of a quantity for g + t h at x, in the g-orthonormal frame where tensorial.
inline std::vector<double> exact_quantity(Quantity q, const MetricField& g, const SymTensorField& h, double t,
                                          const ScalarField* phi, const Vec3d& x) {
  if (needs_phi(q) && !phi) throw std::invalid_argument("quantity needs a test function");
  constexpr int K = kExpansionOrder;
  using J = Jet<K>;
  auto gj = g.g.jet<K>(x);
  auto hj = h.jet<K>(x);
  LocalGeometry<K> base(gj);
  LocalGeometry<K> pert(gj + t * hj);
  // coframe: theta[a][m] = L[m][a] where g = L L^T
  auto L = cholesky(gj);
  auto up_index = [&](int a, auto&& comp) {
    J v;
    for (int m = 0; m < 3; ++m) v += L[m][a] * comp(m);
    return v;
  };
  switch (q) {
    case Quantity::measure: return {(pert.volume_density() / base.volume_density()).c[0]};
    case Quantity::christoffel: {
      Tensor<J, 3> diff;
      for (int i = 0; i < 27; ++i) diff.v[i] = pert.gamma.v[i] - base.gamma.v[i];
      // lower slots to frame, then the upper slot with the coframe
      Tensor<J, 3> lowered;
      for (int m = 0; m < 3; ++m)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            J v;
            for (int p = 0; p < 3; ++p)
              for (int r = 0; r < 3; ++r) v += diff(m, p, r) * base.frame[p][i] * base.frame[r][j];
            lowered(m, i, j) = v;
          }
      std::vector<double> out;
      for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) out.push_back(up_index(k, [&](int m) { return lowered(m, i, j); }).c[0]);
      return out;
    }
    case Quantity::riemann: {
      auto riem = pert.riemann();
      // convention: R^l_ijk = -g~^{l a} R_ijka
      Tensor<J, 4> up;
      for (int m = 0; m < 3; ++m)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
              J v;
              for (int a = 0; a < 3; ++a) v += -1.0 * pert.ginv(m, a) * riem(i, j, k, a);
              up(m, i, j, k) = v;
            }
      Tensor<J, 4> lowered;
      for (int m = 0; m < 3; ++m)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
              J v;
              for (int p = 0; p < 3; ++p)
                for (int r = 0; r < 3; ++r)
                  for (int s = 0; s < 3; ++s) {
                    double e = base.frame[p][i].c[0] * base.frame[r][j].c[0] * base.frame[s][k].c[0];
                    if (e != 0.0) v += e * up(m, p, r, s);
                  }
              lowered(m, i, j, k) = v;
            }
      std::vector<double> out;
      for (int l = 0; l < 3; ++l)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
              out.push_back(up_index(l, [&](int m) { return lowered(m, i, j, k); }).c[0]);
      return out;
    }
    default: break;
  }
  auto curv = local_curvature(pert);
  switch (q) {
    case Quantity::ricci: {
      auto f = base.to_frame(as_tensor(curv.ricci));
      std::vector<double> out;
      for (const auto& v : f.v) out.push_back(v.c[0]);
      return out;
    }
    case Quantity::scalar: return {curv.scalar.c[0]};
    case Quantity::laplacian: return {pert.laplacian(phi->jet<K>(x)).c[0]};
    case Quantity::scalar_squared: return {sqr(curv.scalar.c[0])};
    case Quantity::ricci_norm2: return {curv.ricci_norm2.c[0]};
    case Quantity::laplacian_scalar: return {curv.laplacian_scalar.c[0]};
    case Quantity::q: return {curv.q.c[0]};
    case Quantity::paneitz: return {paneitz_jet(pert, curv, phi->jet<K>(x)).c[0]};
    default: break;
  }
  throw std::logic_error("unhandled quantity");
}

struct FdResult {
  Quantity quantity = Quantity::measure;
  std::vector<double> t;
  std::vector<double> remainder;
  double slope = 0;
  bool pass = false;
};

inline const std::vector<double>& default_t_grid() {
  static const std::vector<double> t = {0.1, 0.05, 0.025, 0.0125};
  return t;
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  const double n = double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += sqr(std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

// Slope of log |exact(g+th) - order-2 prediction| against log t, max over points and components.
inline FdResult fd_validate(Quantity q, const MetricField& g, const SymTensorField& h, const ScalarField* phi,
                            const std::vector<Vec3d>& points, const std::vector<double>& t_grid = default_t_grid()) {
  FdResult r;
  r.quantity = q;
  r.t = t_grid;
  r.remainder.assign(t_grid.size(), 0.0);
  for (const auto& x : points) {
    auto e = expand_quantity(q, g, h, phi, x);
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      const double t = t_grid[k];
      auto ex = exact_quantity(q, g, h, t, phi, x);
      for (std::size_t n = 0; n < ex.size(); ++n) {
        double pred = e[0][n] + t * e[1][n] + t * t * e[2][n];
        r.remainder[k] = std::max(r.remainder[k], std::abs(ex[n] - pred));
      }
    }
  }
  for (double& v : r.remainder) v = std::max(v, 1e-300);
  r.slope = loglog_slope(r.t, r.remainder);
  r.pass = r.slope >= 2.7 && r.slope <= 3.3;
  return r;
}

// |int P1 phi psi - int phi P1 psi + 1/2 int (P phi psi - phi P psi) tr h| over the cubature, measure of g.
inline double adjoint_defect_residual(const MetricField& g, const SymTensorField& h, const ScalarField& phi,
                                      const ScalarField& psi, const Cubature& quad) {
  Accumulator acc;
  for (std::size_t n = 0; n < quad.size(); ++n) {
    const auto& x = quad.x[n];
    auto c = perturbation_context(g, h, x);
    auto pj = phi.jet<kExpansionOrder>(x);
    auto qj = psi.jet<kExpansionOrder>(x);
    double p1p = 0, p1q = 0;
    for (double v : expansion_detail::p1_groups(c, pj)) p1p += v;
    for (double v : expansion_detail::p1_groups(c, qj)) p1q += v;
    double Pp = paneitz_value(c.geo, c.curv, pj);
    double Pq = paneitz_value(c.geo, c.curv, qj);
    double a = pj.c[0], b = qj.c[0];
    double f = p1p * b - a * p1q + 0.5 * (Pp * b - a * Pq) * c.trh.c[0];
    acc.add(quad.w[n] * f * c.geo.volume_density().c[0]);
  }
  return std::abs(acc.value());
}

// max over samples of |P1_{rho^-4 g, rho^-4 h} phi - rho^7 P1_{g,h}(rho phi)|
inline double p1_covariance_residual(const MetricField& g, const SymTensorField& h, const ScalarField& rho,
                                     const ScalarField& phi, const std::vector<Vec3d>& samples) {
  auto gc = conformal_metric(g, rho);
  auto hc = conformal_metric(MetricField{h, "h"}, rho).g;
  auto rho_phi = rho * phi;
  double worst = 0;
  for (const auto& x : samples) {
    double r = rho(x);
    if (!(r > 0)) throw std::invalid_argument("conformal factor must be positive");
    double lhs = p1_apply(gc, hc, phi, x);
    double rhs = std::pow(r, 7) * p1_apply(g, h, rho_phi, x);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

inline void write_fd_csv(std::ostream& os, const FdResult& r) {
  os << "quantity,t,remainder,slope\n";
  char buf[128];
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%s,%.6g,%.17g,%.17g\n", quantity_name(r.quantity).c_str(), r.t[k],
                  r.remainder[k], r.slope);
    os << buf;
  }
}

}  // namespace s3p
