#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <type_traits>

namespace s3p {

// Truncated multivariate Taylor polynomial in three variables.
// Coefficients are stored in graded order; c[idx(a,b,c)] multiplies
// dx^a dy^b dz^c around the expansion point.

namespace detail {

constexpr int jet_size(int k) { return (k + 1) * (k + 2) * (k + 3) / 6; }

constexpr int pair_count(int k) {
  // number of (alpha, beta) with |alpha| + |beta| <= k in three variables
  int n = 1;
  for (int i = 1; i <= 6; ++i) n = n * (k + i) / i;
  return n;
}

template <int K>
struct JetTables {
  static constexpr int N = jet_size(K);
  static constexpr int P = pair_count(K);

  std::array<std::array<int, 3>, N> exps{};
  std::array<int, N> degree{};
  std::array<double, N> factorial{};
  std::array<std::array<int, 3>, N> up{};  // index of beta + e_a, or -1
  std::array<std::array<int, 3>, P> prod{};
  int lookup[K + 1][K + 1][K + 1]{};

  constexpr JetTables() {
    for (int a = 0; a <= K; ++a)
      for (int b = 0; b <= K; ++b)
        for (int c = 0; c <= K; ++c) lookup[a][b][c] = -1;
    int n = 0;
    for (int d = 0; d <= K; ++d)
      for (int a = d; a >= 0; --a)
        for (int b = d - a; b >= 0; --b) {
          int c = d - a - b;
          exps[n] = {a, b, c};
          degree[n] = d;
          double f = 1;
          for (int i = 2; i <= a; ++i) f *= i;
          for (int i = 2; i <= b; ++i) f *= i;
          for (int i = 2; i <= c; ++i) f *= i;
          factorial[n] = f;
          lookup[a][b][c] = n;
          ++n;
        }
    for (int i = 0; i < N; ++i)
      for (int ax = 0; ax < 3; ++ax) {
        auto e = exps[i];
        e[ax] += 1;
        up[i][ax] = degree[i] < K ? lookup[e[0]][e[1]][e[2]] : -1;
      }
    int p = 0;
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        if (degree[i] + degree[j] <= K) {
          prod[p++] = {i, j,
                       lookup[exps[i][0] + exps[j][0]][exps[i][1] + exps[j][1]]
                             [exps[i][2] + exps[j][2]]};
        }
  }
};

template <int K>
inline constexpr JetTables<K> tables{};

}  // namespace detail

template <int K>
class Jet {
  static_assert(K >= 0 && K <= 8);

 public:
  static constexpr int order = K;
  static constexpr int size = detail::jet_size(K);

  std::array<double, size> c{};

  Jet() = default;
  Jet(double v) { c[0] = v; }  // NOLINT: implicit promotion of constants

  static Jet variable(double base, int axis) {
    Jet r(base);
    if constexpr (K >= 1) r.c[1 + axis] = 1.0;
    return r;
  }

  double value() const { return c[0]; }

  static constexpr int index(int a, int b, int cc) { return detail::tables<K>.lookup[a][b][cc]; }

  // mixed partial derivative d^(a,b,c) at the expansion point
  double partial(int a, int b, int cc) const {
    int i = index(a, b, cc);
    return c[i] * detail::tables<K>.factorial[i];
  }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i < size; ++i) c[i] += o.c[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i < size; ++i) c[i] -= o.c[i];
    return *this;
  }
  Jet& operator*=(double s) {
    for (auto& v : c) v *= s;
    return *this;
  }
  Jet& operator/=(double s) { return *this *= (1.0 / s); }
  Jet& operator+=(double s) {
    c[0] += s;
    return *this;
  }
  Jet& operator-=(double s) {
    c[0] -= s;
    return *this;
  }
  Jet& operator*=(const Jet& o) {
    *this = *this * o;
    return *this;
  }
  Jet& operator/=(const Jet& o) {
    *this = *this / o;
    return *this;
  }

  friend Jet operator-(const Jet& a) {
    Jet r;
    for (int i = 0; i < size; ++i) r.c[i] = -a.c[i];
    return r;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double b) { return a += b; }
  friend Jet operator+(double b, Jet a) { return a += b; }
  friend Jet operator-(Jet a, double b) { return a -= b; }
  friend Jet operator-(double b, const Jet& a) { return (-a) += b; }
  friend Jet operator*(Jet a, double b) { return a *= b; }
  friend Jet operator*(double b, Jet a) { return a *= b; }
  friend Jet operator/(Jet a, double b) { return a /= b; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    for (const auto& t : detail::tables<K>.prod) r.c[t[2]] += a.c[t[0]] * b.c[t[1]];
    return r;
  }
  friend Jet operator/(const Jet& a, const Jet& b) { return a * recip(b); }
  friend Jet operator/(double a, const Jet& b) { return recip(b) * a; }

  // f(a0 + delta) = sum_n coef[n] delta^n
  Jet series(const std::array<double, K + 1>& coef) const {
    Jet d = *this;
    d.c[0] = 0.0;
    Jet r(coef[K]);
    for (int n = K - 1; n >= 0; --n) {
      r = r * d;
      r.c[0] += coef[n];
    }
    return r;
  }

  friend Jet recip(const Jet& a) {
    std::array<double, K + 1> k{};
    double inv = 1.0 / a.c[0], p = inv;
    for (int n = 0; n <= K; ++n, p *= -inv) k[n] = p;
    return a.series(k);
  }
  friend Jet exp(const Jet& a) {
    std::array<double, K + 1> k{};
    double e = std::exp(a.c[0]), f = 1;
    for (int n = 0; n <= K; ++n) {
      if (n > 0) f *= n;
      k[n] = e / f;
    }
    return a.series(k);
  }
  friend Jet log(const Jet& a) {
    std::array<double, K + 1> k{};
    double x0 = a.c[0];
    k[0] = std::log(x0);
    double p = 1.0 / x0;
    for (int n = 1; n <= K; ++n, p /= -x0) k[n] = p / n;
    return a.series(k);
  }
  friend Jet pow(const Jet& a, double s) {
    std::array<double, K + 1> k{};
    double x0 = a.c[0];
    double binom = 1;
    for (int n = 0; n <= K; ++n) {
      k[n] = binom * std::pow(x0, s - n);
      binom *= (s - n) / (n + 1);
    }
    return a.series(k);
  }
  friend Jet sqrt(const Jet& a) { return pow(a, 0.5); }
  friend Jet sin(const Jet& a) {
    std::array<double, K + 1> k{};
    double s = std::sin(a.c[0]), co = std::cos(a.c[0]), f = 1;
    for (int n = 0; n <= K; ++n) {
      if (n > 0) f *= n;
      double d = (n % 4 == 0) ? s : (n % 4 == 1) ? co : (n % 4 == 2) ? -s : -co;
      k[n] = d / f;
    }
    return a.series(k);
  }
  friend Jet cos(const Jet& a) {
    std::array<double, K + 1> k{};
    double s = std::sin(a.c[0]), co = std::cos(a.c[0]), f = 1;
    for (int n = 0; n <= K; ++n) {
      if (n > 0) f *= n;
      double d = (n % 4 == 0) ? co : (n % 4 == 1) ? -s : (n % 4 == 2) ? -co : s;
      k[n] = d / f;
    }
    return a.series(k);
  }
  friend Jet atan(const Jet& a) {
    // derivative 1/(1+x^2) composed, then integrated termwise in delta
    std::array<double, K + 1> k{};
    k[0] = std::atan(a.c[0]);
    if constexpr (K >= 1) {
      Jet<K> d = Jet<K>::variable(a.c[0], 0);
      Jet<K> g = recip(1.0 + d * d);
      for (int n = 1; n <= K; ++n) k[n] = g.c[Jet<K>::index(n - 1, 0, 0)] / n;
    }
    return a.series(k);
  }
};

template <int K>
Jet<K> sqr(const Jet<K>& a) {
  return a * a;
}
inline double sqr(double a) { return a * a; }

template <class T>
struct is_jet : std::false_type {};
template <int K>
struct is_jet<Jet<K>> : std::true_type {};
template <class T>
inline constexpr bool is_jet_v = is_jet<T>::value;

template <class T>
double value_of(const T& v) {
  if constexpr (is_jet_v<T>)
    return v.c[0];
  else
    return v;
}

// derivative along an axis; the top degree becomes invalid and is zeroed
template <int K>
Jet<K> d(const Jet<K>& f, int axis) {
  Jet<K> r;
  const auto& t = detail::tables<K>;
  for (int i = 0; i < Jet<K>::size; ++i) {
    int j = t.up[i][axis];
    if (j >= 0) r.c[i] = (t.exps[i][axis] + 1) * f.c[j];
  }
  return r;
}

template <int K, int M>
Jet<K> truncate(const Jet<M>& f) {
  static_assert(K <= M);
  Jet<K> r;
  for (int i = 0; i < Jet<K>::size; ++i) r.c[i] = f.c[i];
  return r;
}

template <int K>
using Point = std::array<Jet<K>, 3>;

template <int K>
Point<K> seed(const std::array<double, 3>& x) {
  return {Jet<K>::variable(x[0], 0), Jet<K>::variable(x[1], 1), Jet<K>::variable(x[2], 2)};
}

template <int K>
bool is_seed(const Point<K>& x) {
  for (int a = 0; a < 3; ++a)
    for (int i = 1; i < Jet<K>::size; ++i)
      if (x[a].c[i] != (i == 1 + a ? 1.0 : 0.0)) return false;
  return true;
}

template <int K>
std::array<double, 3> base_of(const Point<K>& x) {
  return {x[0].c[0], x[1].c[0], x[2].c[0]};
}

// Substitutes jet arguments into a jet: f(u) where f is expanded at base_of(u).
template <int K>
Jet<K> compose(const Jet<K>& f, const Point<K>& u) {
  std::array<std::array<Jet<K>, K + 1>, 3> pw;
  for (int a = 0; a < 3; ++a) {
    Jet<K> du = u[a];
    du.c[0] = 0.0;
    pw[a][0] = Jet<K>(1.0);
    for (int n = 1; n <= K; ++n) pw[a][n] = pw[a][n - 1] * du;
  }
  const auto& t = detail::tables<K>;
  Jet<K> r;
  for (int i = 0; i < Jet<K>::size; ++i) {
    if (f.c[i] == 0.0) continue;
    const auto& e = t.exps[i];
    Jet<K> term = pw[0][e[0]];
    if (e[1]) term = term * pw[1][e[1]];
    if (e[2]) term = term * pw[2][e[2]];
    r += term * f.c[i];
  }
  return r;
}

}  // namespace s3p
