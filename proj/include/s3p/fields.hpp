#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "field.hpp"

namespace s3p {

// tau = sqrt((|x|^2 + 1) / 2); the round metric is tau^-4 |dx|^2.
template <class T>
T tau_of(const Vec3<T>& x) {
  using std::sqrt;
  return sqrt((x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 1.0) * 0.5);
}

template <class T>
T tau_pow(const Vec3<T>& x, double s) {
  using std::pow;
  return pow((x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 1.0) * 0.5, 0.5 * s);
}

inline ScalarField tau_field() {
  FieldInfo info;
  info.decay = 1.0;
  info.label = "tau";
  return make_scalar([](const auto& x) { return tau_of(x); }, info);
}

inline ScalarField tau_power_field(double s) {
  FieldInfo info;
  info.decay = s;
  info.label = "tau^" + std::to_string(s);
  return make_scalar([s](const auto& x) { return tau_pow(x, s); }, info);
}

namespace detail {

template <class F>
decltype(auto) dispatch_order(int m, F&& f) {
  switch (m) {
    case 0:
    case 1: return f(std::integral_constant<int, 1>{});
    case 2: return f(std::integral_constant<int, 2>{});
    case 3: return f(std::integral_constant<int, 3>{});
    case 4: return f(std::integral_constant<int, 4>{});
    case 5: return f(std::integral_constant<int, 5>{});
    case 6: return f(std::integral_constant<int, 6>{});
    default: throw std::domain_error("derivative order exceeds availability");
  }
}

}  // namespace detail

// Mixed partial along the listed axes (order irrelevant).
inline double partial(const ScalarField& f, const std::vector<int>& axes, const Vec3d& x) {
  int a[3] = {0, 0, 0};
  for (int ax : axes) {
    if (ax < 0 || ax > 2) throw std::invalid_argument("axis index out of range");
    ++a[ax];
  }
  const int m = static_cast<int>(axes.size());
  if (m == 0) return f(x);
  return detail::dispatch_order(m, [&](auto k) {
    constexpr int K = decltype(k)::value;
    return f.template jet<K>(x).partial(a[0], a[1], a[2]);
  });
}

// Flat-chart index expressions on seeded tensor jets.

template <int M>
Jet<M> trace(const Sym3<Jet<M>>& t) {
  return t(0, 0) + t(1, 1) + t(2, 2);
}

template <int M>
Jet<M> flat_laplacian(const Jet<M>& f) {
  return d(d(f, 0), 0) + d(d(f, 1), 1) + d(d(f, 2), 2);
}

template <int M>
Vec3<Jet<M>> divergence_jet(const Sym3<Jet<M>>& h) {
  Vec3<Jet<M>> r;
  for (int i = 0; i < 3; ++i) r[i] = d(h(i, 0), 0) + d(h(i, 1), 1) + d(h(i, 2), 2);
  return r;
}

// theta_ijij - Delta tr(theta)
template <int M>
Jet<M> ddmlt_jet(const Sym3<Jet<M>>& t) {
  Jet<M> s;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += d(d(t(i, j), i), j);
  return s - flat_laplacian(trace(t));
}

// M_ij = theta_ikjk + theta_jkik - (tr theta)_ij - Delta theta_ij
template <int M>
Sym3<Jet<M>> lichnerowicz_jet(const Sym3<Jet<M>>& t) {
  Vec3<Jet<M>> div = divergence_jet(t);
  Jet<M> tr = trace(t);
  Sym3<Jet<M>> r;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) r(i, j) = d(div[i], j) + d(div[j], i) - d(d(tr, i), j) - flat_laplacian(t(i, j));
  return r;
}

inline Vec3d tensor_divergence(const SymTensorField& h, const Vec3d& x) {
  auto dv = divergence_jet(h.jet<1>(x));
  return {dv[0].c[0], dv[1].c[0], dv[2].c[0]};
}

inline double double_divergence_minus_laplacian_trace(const SymTensorField& theta, const Vec3d& x) {
  return ddmlt_jet(theta.jet<2>(x)).c[0];
}

inline Sym3<double> lichnerowicz_combination(const SymTensorField& theta, const Vec3d& x) {
  auto m = lichnerowicz_jet(theta.jet<2>(x));
  Sym3<double> r;
  for (int i = 0; i < 6; ++i) r.v[i] = m.v[i].c[0];
  return r;
}

// F = theta_ijij - Delta tr theta as a field.
inline ScalarField ddmlt_field(const SymTensorField& theta) {
  FieldInfo info;
  info.decay = theta.decay() - 2.0;
  info.max_order = theta.info().max_order - 2;
  info.label = "ddmlt(" + theta.info().label + ")";
  return make_scalar(
      [theta](const auto& x) {
        return with_derivatives<2, ScalarKind>(x, [&](const auto& y) { return ddmlt_jet(theta(y)); });
      },
      info);
}

inline SymTensorField lichnerowicz_field(const SymTensorField& theta) {
  FieldInfo info;
  info.decay = theta.decay() - 2.0;
  info.max_order = theta.info().max_order - 2;
  info.label = "lich(" + theta.info().label + ")";
  return make_sym(
      [theta](const auto& x) {
        return with_derivatives<2, SymKind>(x, [&](const auto& y) { return lichnerowicz_jet(theta(y)); });
      },
      info);
}

inline double shifted_decay(double a, double s) { return a == -kInf ? -kInf : a + s; }

// theta = tau^4 h
inline SymTensorField pullback_theta(const SymTensorField& h) {
  FieldInfo info = h.info();
  info.decay = shifted_decay(h.decay(), 4.0);
  info.label = "theta(" + h.info().label + ")";
  return make_sym(
      [h](const auto& x) {
        auto t2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 1.0) * 0.5;
        return (t2 * t2) * h(x);
      },
      info);
}

// h = tau^-4 theta, the inverse of pullback_theta
inline SymTensorField pushforward_theta(const SymTensorField& theta) {
  FieldInfo info = theta.info();
  info.decay = shifted_decay(theta.decay(), -4.0);
  info.label = "h(" + theta.info().label + ")";
  return make_sym(
      [theta](const auto& x) {
        auto t2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 1.0) * 0.5;
        return (1.0 / (t2 * t2)) * theta(x);
      },
      info);
}

// kappa = tau^4 L_X g for the round metric, in chart components.
template <int M>
Sym3<Jet<M>> lie_round_jet(const Vec3<Jet<M>>& X, const Point<M>& x) {
  Jet<M> r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
  // tau^-1 X tau = (X . x) / (2 tau^2) = (X . x) / (|x|^2 + 1)
  Jet<M> s = (X[0] * x[0] + X[1] * x[1] + X[2] * x[2]) / (r2 + 1.0);
  Sym3<Jet<M>> k;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      k(i, j) = d(X[i], j) + d(X[j], i);
      if (i == j) k(i, j) -= 4.0 * s;
    }
  return k;
}

inline SymTensorField lie_derivative_round(const VectorField& X) {
  FieldInfo info;
  info.decay = shifted_decay(X.decay(), -1.0);
  info.max_order = X.info().max_order - 1;
  info.label = "lie(" + X.info().label + ")";
  return make_sym(
      [X](const auto& x) {
        return with_derivatives<1, SymKind>(x, [&](const auto& y) { return lie_round_jet(X(y), y); });
      },
      info);
}

// tau^-1 X tau as a scalar field
inline ScalarField lie_tau_ratio(const VectorField& X) {
  FieldInfo info;
  info.decay = shifted_decay(X.decay(), 0.0);
  info.label = "ratio(" + X.info().label + ")";
  return make_scalar(
      [X](const auto& x) {
        auto v = X(x);
        return (v[0] * x[0] + v[1] * x[1] + v[2] * x[2]) / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 1.0);
      },
      info);
}

// h = f g = f tau^-4 delta
inline SymTensorField conformal_direction(const ScalarField& f) {
  FieldInfo info = f.info();
  info.decay = shifted_decay(f.decay(), -4.0);
  info.label = "conf(" + f.info().label + ")";
  return make_sym(
      [f](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        auto t2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + 1.0) * 0.5;
        T v = f(x) / (t2 * t2);
        Sym3<T> h;
        h(0, 0) = v;
        h(1, 1) = v;
        h(2, 2) = v;
        return h;
      },
      info);
}

// theta = f delta directly (the pullback of conformal_direction(f))
inline SymTensorField pure_trace(const ScalarField& f) {
  FieldInfo info = f.info();
  info.label = "trace(" + f.info().label + ")";
  return make_sym(
      [f](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        T v = f(x);
        Sym3<T> h;
        h(0, 0) = v;
        h(1, 1) = v;
        h(2, 2) = v;
        return h;
      },
      info);
}

// Decay audit along 13 fixed rays.

inline const std::vector<Vec3d>& audit_directions() {
  static const std::vector<Vec3d> dirs = [] {
    std::vector<Vec3d> r;
    const double s2 = 1.0 / std::sqrt(2.0), s3 = 1.0 / std::sqrt(3.0);
    r.push_back({1, 0, 0});
    r.push_back({0, 1, 0});
    r.push_back({0, 0, 1});
    r.push_back({s2, s2, 0});
    r.push_back({s2, -s2, 0});
    r.push_back({s2, 0, s2});
    r.push_back({s2, 0, -s2});
    r.push_back({0, s2, s2});
    r.push_back({0, s2, -s2});
    r.push_back({s3, s3, s3});
    r.push_back({s3, s3, -s3});
    r.push_back({s3, -s3, s3});
    r.push_back({-s3, s3, s3});
    return r;
  }();
  return dirs;
}

struct DecayAudit {
  bool pass = false;
  double exponent = 0;
  std::vector<double> radii;
  std::vector<double> ratio;  // max_m max_alpha |d^alpha f| R^(m - a), per radius
  std::string reason;
};

namespace detail {

template <class Kind, int K>
double audit_ratio(const Field<Kind>& f, double R, double a) {
  double worst = 0;
  const auto& tb = tables<K>;
  for (const auto& dir : audit_directions()) {
    Vec3d x = R * dir;
    auto v = f.template jet<K>(x);
    Kind::map(v, [&](const Jet<K>& j) {
      for (int i = 0; i < Jet<K>::size; ++i) {
        double p = std::abs(j.c[i] * tb.factorial[i]) * std::pow(R, tb.degree[i] - a);
        worst = std::max(worst, p);
      }
      return 0;
    });
  }
  return worst;
}

}  // namespace detail

// Checks |d^m f| <= C |x|^(a-m) for m <= order on rays with |x| in {10, 20, 40}.
template <class Kind>
DecayAudit decay_audit(const Field<Kind>& f, double exponent, int order = 2, double growth = 2.0) {
  DecayAudit r;
  r.exponent = exponent;
  if (exponent == kInf) {
    r.reason = "decay not annotated";
    return r;
  }
  double a = exponent == -kInf ? -12.0 : exponent;
  r.radii = {10.0, 20.0, 40.0};
  for (double R : r.radii) {
    double q = detail::dispatch_order(order, [&](auto k) {
      constexpr int K = decltype(k)::value;
      return detail::audit_ratio<Kind, K>(f, R, a);
    });
    r.ratio.push_back(q);
  }
  const double bound = growth * r.ratio[0] + 1e-14;
  r.pass = r.ratio[1] <= bound && r.ratio[2] <= bound;
  if (!r.pass) r.reason = "derivative ratio grows along rays";
  return r;
}

}  // namespace s3p
