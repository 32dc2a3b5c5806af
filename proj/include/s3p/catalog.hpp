#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fields.hpp"

namespace s3p {

using Mat4 = std::array<std::array<double, 4>, 4>;
using Vec4 = std::array<double, 4>;

enum class Chart { north, south };

// Unit sphere in R^4 through the inverse stereographic projection of the chart.
// North chart: x = 0 is the south pole S and N sits at infinity.
// South chart: y = x/|x|^2, with N at y = 0.
template <class T>
std::array<T, 4> embed(const Vec3<T>& x, Chart chart) {
  T r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
  T inv = 1.0 / (r2 + 1.0);
  T w = (r2 - 1.0) * inv;
  if (chart == Chart::south) w = -w;
  return {2.0 * x[0] * inv, 2.0 * x[1] * inv, 2.0 * x[2] * inv, w};
}

inline Vec3d chart_point(const Vec4& X, Chart chart) {
  double w = chart == Chart::north ? X[3] : -X[3];
  double s = 1.0 / (1.0 - w);
  return {X[0] * s, X[1] * s, X[2] * s};
}

inline Vec3d invert(const Vec3d& x) {
  double r2 = norm2(x);
  return {x[0] / r2, x[1] / r2, x[2] / r2};
}

// Gaussian bump A exp(-|x-c|^2 / w^2)
inline ScalarField gaussian(Vec3d center, double width, double amplitude = 1.0) {
  FieldInfo info;
  info.decay = -kInf;
  info.label = "gauss";
  const double iw2 = 1.0 / (width * width);
  return make_scalar(
      [=](const auto& x) {
        using std::exp;
        auto r2 = (x[0] - center[0]) * (x[0] - center[0]) + (x[1] - center[1]) * (x[1] - center[1]) +
                  (x[2] - center[2]) * (x[2] - center[2]);
        return amplitude * exp(-iw2 * r2);
      },
      info);
}

struct Monomial {
  double coef;
  int a, b, c;
};

// p(x - center) exp(-|x-c|^2 / w^2)
inline ScalarField poly_gaussian(std::vector<Monomial> poly, Vec3d center, double width) {
  FieldInfo info;
  info.decay = -kInf;
  info.label = "polygauss";
  const double iw2 = 1.0 / (width * width);
  return make_scalar(
      [=](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        using std::exp;
        T u = x[0] - center[0], v = x[1] - center[1], w = x[2] - center[2];
        T p(0.0);
        for (const auto& m : poly) {
          T t(m.coef);
          for (int i = 0; i < m.a; ++i) t = t * u;
          for (int i = 0; i < m.b; ++i) t = t * v;
          for (int i = 0; i < m.c; ++i) t = t * w;
          p = p + t;
        }
        return p * exp(-iw2 * (u * u + v * v + w * w));
      },
      info);
}

inline SymTensorField gaussian_tensor(const Sym3<double>& A, Vec3d center, double width) {
  FieldInfo info;
  info.decay = -kInf;
  info.label = "gauss_tensor";
  const double iw2 = 1.0 / (width * width);
  return make_sym(
      [=](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        using std::exp;
        auto r2 = (x[0] - center[0]) * (x[0] - center[0]) + (x[1] - center[1]) * (x[1] - center[1]) +
                  (x[2] - center[2]) * (x[2] - center[2]);
        T e = exp(-iw2 * r2);
        Sym3<T> h;
        for (int i = 0; i < 6; ++i) h.v[i] = A.v[i] * e;
        return h;
      },
      info);
}

inline VectorField rotation_field(int axis = 2) {
  FieldInfo info;
  info.decay = 1.0;
  info.label = "rotation";
  return make_vector(
      [axis](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        int i = (axis + 1) % 3, j = (axis + 2) % 3;
        Vec3<T> v{T(0.0), T(0.0), T(0.0)};
        v[i] = -x[j];
        v[j] = x[i];
        return v;
      },
      info);
}

inline VectorField dilation_field() {
  FieldInfo info;
  info.decay = 1.0;
  info.label = "dilation";
  return make_vector([](const auto& x) { return x; }, info);
}

inline VectorField gaussian_vector(Vec3d v, Vec3d center, double width) {
  FieldInfo info;
  info.decay = -kInf;
  info.label = "gauss_vector";
  const double iw2 = 1.0 / (width * width);
  return make_vector(
      [=](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        using std::exp;
        auto r2 = (x[0] - center[0]) * (x[0] - center[0]) + (x[1] - center[1]) * (x[1] - center[1]) +
                  (x[2] - center[2]) * (x[2] - center[2]);
        T e = exp(-iw2 * r2);
        return Vec3<T>{v[0] * e, v[1] * e, v[2] * e};
      },
      info);
}

// c + b.X + X^T A X restricted to the sphere
struct AmbientQuadratic {
  double c = 0;
  Vec4 b{};
  Mat4 A{};

  template <class T>
  T operator()(const std::array<T, 4>& X) const {
    T r(c);
    for (int a = 0; a < 4; ++a) {
      r = r + b[a] * X[a];
      for (int e = 0; e < 4; ++e)
        if (A[a][e] != 0.0) r = r + A[a][e] * X[a] * X[e];
    }
    return r;
  }
};

inline ScalarField ambient_scalar(AmbientQuadratic q, Chart chart = Chart::north) {
  FieldInfo info;
  info.decay = 0.0;
  info.label = "ambient_scalar";
  return make_scalar([q, chart](const auto& x) { return q(embed(x, chart)); }, info);
}

template <int M>
Sym3<Jet<M>> ambient_form_jet(const Mat4& S, const Point<M>& x, Chart chart) {
  auto X = embed(x, chart);
  std::array<Vec3<Jet<M>>, 4> dX;
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < 3; ++i) dX[a][i] = d(X[a], i);
  Sym3<Jet<M>> h;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      if (S[a][b] == 0.0) continue;
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) h(i, j) += S[a][b] * dX[a][i] * dX[b][j];
    }
  return h;
}

// h = sum S_ab dX_a dX_b, smooth on the sphere; S symmetric.
inline SymTensorField ambient_form(const Mat4& S, Chart chart = Chart::north) {
  FieldInfo info;
  info.decay = -4.0;
  info.max_order = kMaxJetOrder - 1;
  info.label = "ambient_form";
  return make_sym(
      [S, chart](const auto& x) {
        return with_derivatives<1, SymKind>(x, [&](const auto& y) { return ambient_form_jet(S, y, chart); });
      },
      info);
}

// h = f(X) g for an ambient quadratic f
inline SymTensorField ambient_conformal(AmbientQuadratic q, Chart chart = Chart::north) {
  return conformal_direction(ambient_scalar(q, chart)).with_label("ambient_conformal");
}

// chart components of the tangential part of V(X) = v + M X
template <int M>
Vec3<Jet<M>> ambient_vector_jet(const Vec4& v, const Mat4& Mx, const Point<M>& x, Chart chart) {
  auto X = embed(x, chart);
  std::array<Jet<M>, 4> V;
  for (int a = 0; a < 4; ++a) {
    V[a] = Jet<M>(v[a]);
    for (int b = 0; b < 4; ++b)
      if (Mx[a][b] != 0.0) V[a] += Mx[a][b] * X[b];
  }
  Jet<M> t2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 1.0) * 0.5;
  Jet<M> t4 = t2 * t2;
  Vec3<Jet<M>> r;
  for (int i = 0; i < 3; ++i) {
    Jet<M> s;
    for (int a = 0; a < 4; ++a) s += V[a] * d(X[a], i);
    r[i] = t4 * s;
  }
  return r;
}

inline VectorField ambient_vector(Vec4 v, Mat4 Mx, Chart chart = Chart::north) {
  FieldInfo info;
  info.decay = 2.0;
  info.max_order = kMaxJetOrder - 1;
  info.label = "ambient_vector";
  return make_vector(
      [v, Mx, chart](const auto& x) {
        return with_derivatives<1, VectorKind>(x, [&](const auto& y) { return ambient_vector_jet(v, Mx, y, chart); });
      },
      info);
}

// Smooth step: 1 for s <= 1, 0 for s >= 2.
template <class T>
T smooth_cutoff(const T& s) {
  using std::exp;
  double s0 = value_of(s);
  if (s0 <= 1.0) return T(1.0);
  if (s0 >= 2.0) return T(0.0);
  T a = exp(-1.0 / (2.0 - s));
  T b = exp(-1.0 / (s - 1.0));
  return a / (a + b);
}

// A symmetric tensor on the sphere, available in both stereographic charts.
struct SphereTensor {
  SymTensorField north;
  SymTensorField south;
  std::string label;
};

namespace detail {

// Pulls a tensor back through the inversion y -> y / |y|^2, which exchanges the two charts.
inline SymTensorField inversion_pullback(const SymTensorField& h, FieldInfo info) {
  return make_sym(
      [h](const auto& y) {
        using T = scalar_of_t<decltype(y)>;
        const Vec3d y0{value_of(y[0]), value_of(y[1]), value_of(y[2])};
        if (norm2(y0) < 1e-6) return Sym3<T>{};
        T r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        T ir2 = 1.0 / r2;
        Vec3<T> x{y[0] * ir2, y[1] * ir2, y[2] * ir2};
        Sym3<T> hx = h(x);
        // J_ia = dx_i/dy_a = (delta |y|^2 - 2 y_i y_a) / |y|^4
        Mat3<T> J;
        T ir4 = ir2 * ir2;
        for (int i = 0; i < 3; ++i)
          for (int a = 0; a < 3; ++a) J[i][a] = ((i == a ? r2 : T(0.0)) - 2.0 * y[i] * y[a]) * ir4;
        Sym3<T> r;
        for (int a = 0; a < 3; ++a)
          for (int b = a; b < 3; ++b) {
            T s(0.0);
            for (int i = 0; i < 3; ++i)
              for (int j = 0; j < 3; ++j) s += J[i][a] * hx(i, j) * J[j][b];
            r(a, b) = s;
          }
        return r;
      },
      std::move(info));
}

}  // namespace detail

// Transfers a north-chart tensor to the south chart through the inversion.
// Near y = 0 the tensor must vanish to high order (decay <= -8).
inline SymTensorField north_to_south(const SymTensorField& h) {
  if (!(h.decay() <= -8.0)) throw std::invalid_argument("tensor does not vanish near N fast enough for chart transfer");
  FieldInfo info;
  info.decay = kInf;
  info.label = "south(" + h.info().label + ")";
  return detail::inversion_pullback(h, info);
}

// South-chart tensor supported in |y| <= r to the north chart; vanishes for |x| < 1 / r.
inline SymTensorField south_to_north(const SymTensorField& k, double decay) {
  FieldInfo info;
  info.decay = decay;
  info.max_order = k.info().max_order;
  info.label = "north(" + k.info().label + ")";
  return detail::inversion_pullback(k, info);
}

inline SphereTensor sphere_tensor_from_north(const SymTensorField& h) {
  return {h, north_to_south(h), h.info().label};
}

inline SphereTensor ambient_form_tensor(const Mat4& S) {
  return {ambient_form(S, Chart::north), ambient_form(S, Chart::south), "ambient_form"};
}

inline SphereTensor ambient_conformal_tensor(const AmbientQuadratic& q) {
  return {ambient_conformal(q, Chart::north), ambient_conformal(q, Chart::south), "ambient_conformal"};
}

inline SphereTensor lie_tensor(const Vec4& v, const Mat4& Mx) {
  auto north = pushforward_theta(lie_derivative_round(ambient_vector(v, Mx, Chart::north)));
  auto south = pushforward_theta(lie_derivative_round(ambient_vector(v, Mx, Chart::south)));
  FieldInfo info = north.info();
  info.decay = -4.0;
  return {north.with_info(info), south, "lie_ambient"};
}

}  // namespace s3p
