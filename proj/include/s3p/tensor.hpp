#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "jet.hpp"

namespace s3p {

using Vec3d = std::array<double, 3>;

template <class T>
using Vec3 = std::array<T, 3>;

template <class T>
using Mat3 = std::array<std::array<T, 3>, 3>;

inline constexpr int sym_index(int i, int j) {
  constexpr int map[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};
  return map[i][j];
}

// Symmetric 3x3 tensor, six stored components (11,12,13,22,23,33).
template <class T>
struct Sym3 {
  std::array<T, 6> v{};

  T& operator()(int i, int j) { return v[sym_index(i, j)]; }
  const T& operator()(int i, int j) const { return v[sym_index(i, j)]; }

  static Sym3 identity() {
    Sym3 s;
    for (int i = 0; i < 3; ++i) s(i, i) = T(1.0);
    return s;
  }
};

template <class T>
Sym3<T> operator+(Sym3<T> a, const Sym3<T>& b) {
  for (int i = 0; i < 6; ++i) a.v[i] += b.v[i];
  return a;
}
template <class T>
Sym3<T> operator-(Sym3<T> a, const Sym3<T>& b) {
  for (int i = 0; i < 6; ++i) a.v[i] -= b.v[i];
  return a;
}
template <class T, class S>
Sym3<T> operator*(const S& s, Sym3<T> a) {
  for (int i = 0; i < 6; ++i) a.v[i] = a.v[i] * s;
  return a;
}

// Dense rank-R tensor over three indices, row-major.
template <class T, int R>
struct Tensor {
  static constexpr int size = R == 0 ? 1 : 3 * Tensor<T, (R > 0 ? R - 1 : 0)>::size;
  std::array<T, size> v{};

  template <class... I>
  T& operator()(I... i) {
    static_assert(sizeof...(I) == R);
    int k = 0;
    ((k = 3 * k + i), ...);
    return v[k];
  }
  template <class... I>
  const T& operator()(I... i) const {
    static_assert(sizeof...(I) == R);
    int k = 0;
    ((k = 3 * k + i), ...);
    return v[k];
  }
};
template <class T>
struct Tensor<T, 0> {
  static constexpr int size = 1;
  std::array<T, 1> v{};
  T& operator()() { return v[0]; }
  const T& operator()() const { return v[0]; }
};

inline double dot(const Vec3d& a, const Vec3d& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(const Vec3d& a) { return dot(a, a); }
inline double norm(const Vec3d& a) { return std::sqrt(norm2(a)); }
inline Vec3d operator+(const Vec3d& a, const Vec3d& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3d operator-(const Vec3d& a, const Vec3d& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3d operator*(double s, const Vec3d& a) { return {s * a[0], s * a[1], s * a[2]}; }

template <class T>
T sqrt_any(const T& s) {
  using std::sqrt;
  return sqrt(s);
}

// Cholesky factor of a symmetric matrix given as Sym3; throws when not positive definite.
template <class T>
Mat3<T> cholesky(const Sym3<T>& g) {
  Mat3<T> L{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      T s = g(i, j);
      for (int k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
      if (i == j) {
        if (!(value_of(s) > 0.0)) throw std::domain_error("metric is not positive definite");
        L[i][i] = sqrt_any(s);
      } else {
        L[i][j] = s / L[j][j];
      }
    }
  }
  return L;
}

template <class T>
T det(const Sym3<T>& g) {
  return g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(1, 2)) - g(0, 1) * (g(0, 1) * g(2, 2) - g(1, 2) * g(0, 2)) +
         g(0, 2) * (g(0, 1) * g(1, 2) - g(1, 1) * g(0, 2));
}

template <class T>
Sym3<T> inverse(const Sym3<T>& g) {
  T dt = det(g);
  if (value_of(dt) == 0.0) throw std::domain_error("singular matrix");
  T inv = T(1.0) / dt;
  Sym3<T> r;
  r(0, 0) = (g(1, 1) * g(2, 2) - g(1, 2) * g(1, 2)) * inv;
  r(0, 1) = (g(0, 2) * g(1, 2) - g(0, 1) * g(2, 2)) * inv;
  r(0, 2) = (g(0, 1) * g(1, 2) - g(0, 2) * g(1, 1)) * inv;
  r(1, 1) = (g(0, 0) * g(2, 2) - g(0, 2) * g(0, 2)) * inv;
  r(1, 2) = (g(0, 2) * g(0, 1) - g(0, 0) * g(1, 2)) * inv;
  r(2, 2) = (g(0, 0) * g(1, 1) - g(0, 1) * g(0, 1)) * inv;
  return r;
}

}  // namespace s3p
