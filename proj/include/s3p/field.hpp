#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>

#include "jet.hpp"
#include "tensor.hpp"

namespace s3p {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr int kMaxJetOrder = 6;

enum class Representation { analytic, grid };

// decay: the field is O(|x|^decay) with every m-th derivative O(|x|^(decay-m)).
// +inf means "not annotated", -inf means faster than any power.
struct FieldInfo {
  double decay = kInf;
  int max_order = kMaxJetOrder;
  Representation representation = Representation::analytic;
  std::string label;
};

struct ScalarKind {
  template <class T>
  using type = T;
  template <class T, class F>
  static auto map(const T& v, F&& f) {
    return f(v);
  }
};

struct VectorKind {
  template <class T>
  using type = Vec3<T>;
  template <class T, class F>
  static auto map(const Vec3<T>& v, F&& f) {
    using R = std::decay_t<decltype(f(v[0]))>;
    return Vec3<R>{f(v[0]), f(v[1]), f(v[2])};
  }
};

struct SymKind {
  template <class T>
  using type = Sym3<T>;
  template <class T, class F>
  static auto map(const Sym3<T>& v, F&& f) {
    using R = std::decay_t<decltype(f(v.v[0]))>;
    Sym3<R> r;
    for (int i = 0; i < 6; ++i) r.v[i] = f(v.v[i]);
    return r;
  }
};

template <class Kind>
class Field {
 public:
  template <class T>
  using value_t = typename Kind::template type<T>;

  struct Impl {
    virtual ~Impl() = default;
    virtual value_t<double> eval(const Vec3d& x) const = 0;
    virtual value_t<Jet<1>> eval(const Point<1>& x) const = 0;
    virtual value_t<Jet<2>> eval(const Point<2>& x) const = 0;
    virtual value_t<Jet<3>> eval(const Point<3>& x) const = 0;
    virtual value_t<Jet<4>> eval(const Point<4>& x) const = 0;
    virtual value_t<Jet<5>> eval(const Point<5>& x) const = 0;
    virtual value_t<Jet<6>> eval(const Point<6>& x) const = 0;
  };

  Field() = default;
  Field(std::shared_ptr<const Impl> impl, FieldInfo info) : impl_(std::move(impl)), info_(std::move(info)) {}

  explicit operator bool() const { return static_cast<bool>(impl_); }

  value_t<double> operator()(const Vec3d& x) const { return impl_->eval(x); }
  template <int K>
  value_t<Jet<K>> operator()(const Point<K>& x) const {
    static_assert(K >= 1 && K <= kMaxJetOrder);
    return impl_->eval(x);
  }
  template <int K>
  value_t<Jet<K>> jet(const Vec3d& x) const {
    return impl_->eval(seed<K>(x));
  }

  const FieldInfo& info() const { return info_; }
  double decay() const { return info_.decay; }
  Field with_info(FieldInfo info) const { return Field(impl_, std::move(info)); }
  Field with_label(std::string label) const {
    FieldInfo i = info_;
    i.label = std::move(label);
    return Field(impl_, std::move(i));
  }

 private:
  std::shared_ptr<const Impl> impl_;
  FieldInfo info_;
};

using ScalarField = Field<ScalarKind>;
using VectorField = Field<VectorKind>;
using SymTensorField = Field<SymKind>;

namespace detail {

template <class Kind, class F>
struct FunctionImpl final : Field<Kind>::Impl {
  template <class T>
  using value_t = typename Kind::template type<T>;
  F f;
  explicit FunctionImpl(F fn) : f(std::move(fn)) {}
  value_t<double> eval(const Vec3d& x) const override { return f(x); }
  value_t<Jet<1>> eval(const Point<1>& x) const override { return f(x); }
  value_t<Jet<2>> eval(const Point<2>& x) const override { return f(x); }
  value_t<Jet<3>> eval(const Point<3>& x) const override { return f(x); }
  value_t<Jet<4>> eval(const Point<4>& x) const override { return f(x); }
  value_t<Jet<5>> eval(const Point<5>& x) const override { return f(x); }
  value_t<Jet<6>> eval(const Point<6>& x) const override { return f(x); }
};

}  // namespace detail

// f must be callable as f(const std::array<T,3>&) for T = double and Jet<1..6>.
template <class Kind, class F>
Field<Kind> make_field(F f, FieldInfo info) {
  return Field<Kind>(std::make_shared<detail::FunctionImpl<Kind, F>>(std::move(f)), std::move(info));
}

template <class F>
ScalarField make_scalar(F f, FieldInfo info) {
  return make_field<ScalarKind>(std::move(f), std::move(info));
}
template <class F>
VectorField make_vector(F f, FieldInfo info) {
  return make_field<VectorKind>(std::move(f), std::move(info));
}
template <class F>
SymTensorField make_sym(F f, FieldInfo info) {
  return make_field<SymKind>(std::move(f), std::move(info));
}

template <class X>
using scalar_of_t = std::decay_t<decltype(std::declval<X>()[0])>;

// Evaluates g, which differentiates its inputs D times, at the order needed
// for the requested result type. g receives seeded points.
template <int D, class Kind, class T, class G>
auto with_derivatives(const Vec3<T>& x, G&& g) -> typename Kind::template type<T> {
  if constexpr (std::is_same_v<T, double>) {
    static_assert(D >= 1 && D <= kMaxJetOrder);
    auto r = g(seed<D>(x));
    return Kind::map(r, [](const auto& j) { return j.c[0]; });
  } else {
    constexpr int K = T::order;
    constexpr int M = K + D;
    if constexpr (M > kMaxJetOrder) {
      throw std::domain_error("derivative order exceeds availability");
    } else {
      const Vec3d b = base_of<K>(x);
      auto r = g(seed<M>(b));
      auto t = Kind::map(r, [](const auto& j) { return truncate<K>(j); });
      if (is_seed<K>(x)) return t;
      return Kind::map(t, [&](const Jet<K>& j) { return compose(j, x); });
    }
  }
}

inline ScalarField constant_scalar(double c, std::string label = "constant") {
  FieldInfo info;
  info.decay = c == 0.0 ? -kInf : 0.0;
  info.label = std::move(label);
  return make_scalar([c](const auto& x) { return scalar_of_t<decltype(x)>(c); }, info);
}

inline SymTensorField zero_tensor() {
  FieldInfo info;
  info.decay = -kInf;
  info.label = "zero";
  return make_sym(
      [](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        return Sym3<T>{};
      },
      info);
}

inline SymTensorField identity_tensor() {
  FieldInfo info;
  info.decay = 0.0;
  info.label = "identity";
  return make_sym(
      [](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        return Sym3<T>::identity();
      },
      info);
}

inline SymTensorField operator+(const SymTensorField& a, const SymTensorField& b) {
  FieldInfo info;
  info.decay = std::max(a.decay(), b.decay());
  info.max_order = std::min(a.info().max_order, b.info().max_order);
  info.label = a.info().label + "+" + b.info().label;
  return make_sym([a, b](const auto& x) { return a(x) + b(x); }, info);
}

inline SymTensorField operator-(const SymTensorField& a, const SymTensorField& b) {
  FieldInfo info;
  info.decay = std::max(a.decay(), b.decay());
  info.max_order = std::min(a.info().max_order, b.info().max_order);
  info.label = a.info().label + "-" + b.info().label;
  return make_sym([a, b](const auto& x) { return a(x) - b(x); }, info);
}

inline SymTensorField operator*(double s, const SymTensorField& a) {
  FieldInfo info = a.info();
  if (s == 0.0) info.decay = -kInf;
  info.label = std::to_string(s) + "*" + a.info().label;
  return make_sym([a, s](const auto& x) { return s * a(x); }, info);
}

inline ScalarField operator*(const ScalarField& f, const ScalarField& g) {
  FieldInfo info;
  info.decay = f.decay() + g.decay();
  if (f.decay() == -kInf || g.decay() == -kInf) info.decay = -kInf;
  info.max_order = std::min(f.info().max_order, g.info().max_order);
  info.label = f.info().label + "*" + g.info().label;
  return make_scalar([f, g](const auto& x) { return f(x) * g(x); }, info);
}

inline ScalarField operator+(const ScalarField& f, const ScalarField& g) {
  FieldInfo info;
  info.decay = std::max(f.decay(), g.decay());
  info.max_order = std::min(f.info().max_order, g.info().max_order);
  info.label = f.info().label + "+" + g.info().label;
  return make_scalar([f, g](const auto& x) { return f(x) + g(x); }, info);
}

inline ScalarField operator*(double s, const ScalarField& f) {
  FieldInfo info = f.info();
  if (s == 0.0) info.decay = -kInf;
  return make_scalar([f, s](const auto& x) { return s * f(x); }, info);
}

inline ScalarField component(const SymTensorField& h, int i, int j) {
  FieldInfo info = h.info();
  info.label = h.info().label + "[" + std::to_string(i) + std::to_string(j) + "]";
  return make_scalar([h, i, j](const auto& x) { return h(x)(i, j); }, info);
}

inline ScalarField component(const VectorField& v, int i) {
  FieldInfo info = v.info();
  info.label = v.info().label + "[" + std::to_string(i) + "]";
  return make_scalar([v, i](const auto& x) { return v(x)[i]; }, info);
}

inline SymTensorField scale(const ScalarField& f, const SymTensorField& h) {
  FieldInfo info;
  info.decay = (f.decay() == -kInf || h.decay() == -kInf) ? -kInf : f.decay() + h.decay();
  info.max_order = std::min(f.info().max_order, h.info().max_order);
  info.label = f.info().label + "*" + h.info().label;
  return make_sym([f, h](const auto& x) { return f(x) * h(x); }, info);
}

}  // namespace s3p
