#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace s3p {

// Neumaier compensated summation
class Accumulator {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0;
  double comp_ = 0;
};

struct Rule {
  std::vector<double> x, w;
};

// Gauss-Legendre on [a, b]
inline Rule gauss_legendre(int n, double a = -1.0, double b = 1.0) {
  if (n < 1) throw std::invalid_argument("quadrature order must be positive");
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = 0;
      for (int k = 1; k <= n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double w = 2 / ((1 - z * z) * dp * dp);
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = w;
    r.w[n - 1 - i] = w;
  }
  const double h = 0.5 * (b - a), m = 0.5 * (a + b);
  for (int i = 0; i < n; ++i) {
    r.x[i] = m + h * r.x[i];
    r.w[i] *= h;
  }
  return r;
}

// Points and weights on the unit sphere S^2: Gauss-Legendre in cos(theta) times a uniform azimuth.
struct SphereRule {
  std::vector<Vec3d> n;
  std::vector<double> w;
};

inline SphereRule sphere_rule(int n_theta) {
  SphereRule s;
  auto gl = gauss_legendre(n_theta);
  const int n_phi = 2 * n_theta;
  for (int i = 0; i < n_theta; ++i) {
    double ct = gl.x[i], st = std::sqrt(std::max(0.0, 1 - ct * ct));
    for (int j = 0; j < n_phi; ++j) {
      double ph = 2 * M_PI * (j + 0.5) / n_phi;
      s.n.push_back({st * std::cos(ph), st * std::sin(ph), ct});
      s.w.push_back(gl.w[i] * 2 * M_PI / n_phi);
    }
  }
  return s;
}

// Cubature nodes with weights for integrals over R^3 or a region of it.
struct Cubature {
  std::vector<Vec3d> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

// Trapezoid (midpoint-free, node-centred) rule on the box c + [-L, L]^3 with n nodes per axis,
// spectrally accurate for integrands that are negligible at the box faces.
inline Cubature box_trapezoid(const Vec3d& c, double L, int n) {
  Cubature q;
  const double h = 2 * L / n, w = h * h * h;
  q.x.reserve(std::size_t(n) * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        q.x.push_back({c[0] - L + h * i, c[1] - L + h * j, c[2] - L + h * k});
        q.w.push_back(w);
      }
  return q;
}

// Spherical product rule around c: Gauss-Legendre in r on [0, R], sphere rule in angle.
inline Cubature ball_rule(const Vec3d& c, double R, int n_r, int n_theta) {
  Cubature q;
  auto gl = gauss_legendre(n_r, 0.0, R);
  auto s = sphere_rule(n_theta);
  for (int i = 0; i < n_r; ++i)
    for (std::size_t j = 0; j < s.n.size(); ++j) {
      q.x.push_back(c + gl.x[i] * s.n[j]);
      q.w.push_back(gl.w[i] * gl.x[i] * gl.x[i] * s.w[j]);
    }
  return q;
}

// All of R^3 through r = s / (1 - s), s in (0, 1); suited to algebraic decay.
inline Cubature mapped_space_rule(const Vec3d& c, int n_r, int n_theta, double scale = 1.0) {
  Cubature q;
  auto gl = gauss_legendre(n_r, 0.0, 1.0);
  auto s = sphere_rule(n_theta);
  for (int i = 0; i < n_r; ++i) {
    double u = gl.x[i];
    double r = scale * u / (1 - u);
    double jac = scale / ((1 - u) * (1 - u));
    for (std::size_t j = 0; j < s.n.size(); ++j) {
      q.x.push_back(c + r * s.n[j]);
      q.w.push_back(gl.w[i] * jac * r * r * s.w[j]);
    }
  }
  return q;
}

template <class F>
double integrate(const Cubature& q, F&& f) {
  Accumulator acc;
  for (std::size_t i = 0; i < q.size(); ++i) acc.add(q.w[i] * f(q.x[i]));
  return acc.value();
}

// Integral over the round S^3 of a chart function, dmu = tau^-6 dx.
template <class F>
double integrate_sphere(F&& f, int n_r = 96, int n_theta = 48) {
  auto q = mapped_space_rule({0, 0, 0}, n_r, n_theta);
  return integrate(q, [&](const Vec3d& x) {
    double t2 = 0.5 * (norm2(x) + 1);
    return f(x) / (t2 * t2 * t2);
  });
}

}  // namespace s3p
