#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "catalog.hpp"
#include "geometry.hpp"
#include "green.hpp"
#include "quadrature.hpp"

namespace s3p {

inline const double kIiPrefactor = -1.0 / (128.0 * M_PI * M_PI);
inline const double kFluxPrefactor = -1.0 / (256.0 * M_PI * M_PI);

struct IntegralEstimate {
  double value = 0;
  double quadrature_error = 0;  // |fine - coarse|
  double tail_bound = 0;        // mass beyond the outermost node, from the decay exponent
};

// Radially mapped product rule over R^3 centred at `center`. With `breaks` set, the radial
// direction is split into Gauss-Legendre panels [0, b0], [b0, b1], ... of n_r nodes each and
// a mapped tail beyond the last break.
struct SpaceQuadrature {
  int n_r = 64;
  int n_theta = 32;
  double scale = 1.0;
  Vec3d center{0, 0, 0};
  std::vector<double> breaks;
};

namespace variation_detail {

struct ShellSum {
  double value = 0;
  double outer_radius = 0;
  double outer_density = 0;  // r^2 times the angular integral at the outermost node
};

template <class F>
ShellSum mapped_sum(F&& f, const SpaceQuadrature& q, int n_r, int n_theta) {
  auto s = sphere_rule(n_theta);
  Accumulator acc;
  ShellSum r;
  auto shell = [&](double rad) {
    Accumulator sh;
    for (std::size_t j = 0; j < s.n.size(); ++j) sh.add(s.w[j] * f(q.center + rad * s.n[j]));
    return sh.value() * rad * rad;
  };
  double lo = 0;
  for (double b : q.breaks) {
    auto gl = gauss_legendre(n_r, lo, b);
    for (int i = 0; i < n_r; ++i) acc.add(gl.w[i] * shell(gl.x[i]));
    lo = b;
  }
  auto gl = gauss_legendre(n_r, 0.0, 1.0);
  for (int i = 0; i < n_r; ++i) {
    const double u = gl.x[i];
    const double rad = lo + q.scale * u / (1 - u);
    const double jac = q.scale / ((1 - u) * (1 - u));
    const double D = shell(rad);
    acc.add(gl.w[i] * jac * D);
    if (i == n_r - 1) {
      r.outer_radius = rad;
      r.outer_density = D;
    }
  }
  r.value = acc.value();
  return r;
}

}  // namespace variation_detail

// Integral over R^3 of an integrand decaying like |x|^p, p < -3 (p = -inf for rapid decay).
template <class F>
IntegralEstimate space_integral(F&& f, const SpaceQuadrature& q, double p) {
  if (!(p < -3.0)) throw std::domain_error("integrand tail too heavy for an R^3 integral");
  auto fine = variation_detail::mapped_sum(f, q, q.n_r, q.n_theta);
  auto coarse = variation_detail::mapped_sum(f, q, (3 * q.n_r) / 4, (3 * q.n_theta) / 4);
  IntegralEstimate e;
  e.value = fine.value;
  e.quadrature_error = std::abs(fine.value - coarse.value);
  if (p != -kInf) e.tail_bound = std::abs(fine.outer_density) * fine.outer_radius / (-p - 3.0);
  return e;
}

inline IntegralEstimate scaled(IntegralEstimate e, double s) {
  e.value *= s;
  e.quadrature_error *= std::abs(s);
  e.tail_bound *= std::abs(s);
  return e;
}

// ---- second variation --------------------------------------------------------------

namespace variation_detail {

struct IiPoint {
  Sym3<double> M;
  double F = 0;
};

inline IiPoint ii_point(const SymTensorField& t, const Vec3d& x) {
  auto tj = t.jet<2>(x);
  auto m = lichnerowicz_jet(tj);
  IiPoint p;
  for (int i = 0; i < 6; ++i) p.M.v[i] = m.v[i].c[0];
  p.F = ddmlt_jet(tj).c[0];
  return p;
}

inline double ii_density(const IiPoint& a, const IiPoint& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += a.M(i, j) * b.M(i, j);
  return s - 1.5 * a.F * b.F;
}

inline double checked_decay(const SymTensorField& t) {
  double a = t.decay();
  if (!(a < 0.5)) throw std::domain_error("decay of " + t.info().label + " too slow for the second variation integral");
  return a;
}

}  // namespace variation_detail

// II(theta, kappa) = -1/(128 pi^2) int [M(theta) : M(kappa) - 3/2 F(theta) F(kappa)] dx
inline IntegralEstimate ii_bilinear(const SymTensorField& theta, const SymTensorField& kappa,
                                    const SpaceQuadrature& q = {}) {
  using namespace variation_detail;
  const double p = checked_decay(theta) + checked_decay(kappa) - 4.0;
  auto e = space_integral([&](const Vec3d& x) { return ii_density(ii_point(theta, x), ii_point(kappa, x)); }, q, p);
  return scaled(e, kIiPrefactor);
}

inline IntegralEstimate ii_quadform(const SymTensorField& theta, const SpaceQuadrature& q = {}) {
  using namespace variation_detail;
  const double p = 2 * checked_decay(theta) - 4.0;
  auto e = space_integral(
      [&](const Vec3d& x) {
        auto a = ii_point(theta, x);
        return ii_density(a, a);
      },
      q, p);
  return scaled(e, kIiPrefactor);
}

// 1/(128 pi^2) int [|M|^2 + 3/2 F^2] dx, the natural size of II(theta)
inline IntegralEstimate ii_magnitude(const SymTensorField& theta, const SpaceQuadrature& q = {}) {
  using namespace variation_detail;
  const double p = 2 * checked_decay(theta) - 4.0;
  auto e = space_integral(
      [&](const Vec3d& x) {
        auto a = ii_point(theta, x);
        return ii_density(a, a) + 3.0 * a.F * a.F;
      },
      q, p);
  return scaled(e, -kIiPrefactor);
}

// Same forms on an explicit cubature (grid routes).
inline double ii_bilinear(const SymTensorField& theta, const SymTensorField& kappa, const Cubature& c) {
  using namespace variation_detail;
  return kIiPrefactor * integrate(c, [&](const Vec3d& x) { return ii_density(ii_point(theta, x), ii_point(kappa, x)); });
}

inline double ii_quadform(const SymTensorField& theta, const Cubature& c) {
  using namespace variation_detail;
  return kIiPrefactor * integrate(c, [&](const Vec3d& x) {
           auto a = ii_point(theta, x);
           return ii_density(a, a);
         });
}

// int sum theta_ij^2 dx
inline IntegralEstimate flat_l2_norm2(const SymTensorField& theta, const SpaceQuadrature& q = {}) {
  return space_integral(
      [&](const Vec3d& x) {
        auto t = theta(x);
        double s = 0;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) s += t(i, j) * t(i, j);
        return s;
      },
      q, 2 * theta.decay());
}

// int sum theta_ij^2 + 2 |grad theta_ij|^2 + |Hess theta_ij|^2 dx, the (1 + |xi|^2)^2 weight
inline IntegralEstimate flat_h2_norm2(const SymTensorField& theta, const SpaceQuadrature& q = {}) {
  const auto& tb = detail::tables<2>;
  return space_integral(
      [&](const Vec3d& x) {
        auto t = theta.jet<2>(x);
        double s = 0;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int k = 0; k < Jet<2>::size; ++k) {
              const double d = t(i, j).c[k] * tb.factorial[k];
              const double w = tb.degree[k] == 0 ? 1.0 : 2.0 / tb.factorial[k];
              s += w * d * d;
            }
        return s;
      },
      q, 2 * theta.decay());
}

// max over points, components and |alpha| <= K of |d^alpha theta_ij|
template <int K = 4>
double ck_norm(const SymTensorField& theta, const std::vector<Vec3d>& points) {
  const auto& tb = detail::tables<K>;
  double m = 0;
  for (const auto& x : points) {
    auto t = theta.jet<K>(x);
    for (int c = 0; c < 6; ++c)
      for (int i = 0; i < Jet<K>::size; ++i) m = std::max(m, std::abs(t.v[c].c[i] * tb.factorial[i]));
  }
  return m;
}

inline std::vector<Vec3d> norm_sample_points() {
  std::vector<Vec3d> r{{0, 0, 0}};
  for (double R : {0.5, 1.0, 2.0, 4.0, 8.0})
    for (const auto& d : audit_directions()) {
      r.push_back(R * d);
      r.push_back(-R * d);
    }
  return r;
}

// ---- first variation at the pole ----------------------------------------------------

struct FluxResult {
  std::vector<double> radii;
  std::vector<double> samples;
  double value = 0;  // R -> infinity limit
  double error = 0;  // change when the smallest radius is dropped
};

inline const std::vector<double>& default_flux_radii() {
  static const std::vector<double> r{20, 40, 80, 160, 320};
  return r;
}

// Polynomial extrapolation in 1/R to 1/R = 0 (Neville).
inline double extrapolate_inverse_powers(const std::vector<double>& R, const std::vector<double>& v) {
  const std::size_t n = R.size();
  if (n == 0 || v.size() != n) throw std::invalid_argument("extrapolation needs matching nonempty samples");
  std::vector<double> p = v, t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = 1.0 / R[i];
  for (std::size_t m = 1; m < n; ++m)
    for (std::size_t i = 0; i + m < n; ++i) p[i] = (t[i] * p[i + 1] - t[i + m] * p[i]) / (t[i] - t[i + m]);
  return p[0];
}

namespace variation_detail {

inline FluxResult finish_limit(std::vector<double> radii, std::vector<double> samples) {
  FluxResult r;
  r.radii = std::move(radii);
  r.samples = std::move(samples);
  r.value = extrapolate_inverse_powers(r.radii, r.samples);
  if (r.radii.size() > 1) {
    std::vector<double> R2(r.radii.begin() + 1, r.radii.end()), s2(r.samples.begin() + 1, r.samples.end());
    r.error = std::abs(r.value - extrapolate_inverse_powers(R2, s2));
  }
  return r;
}

inline void check_radii(const std::vector<double>& radii) {
  if (radii.size() < 2) throw std::invalid_argument("R-grid needs at least two radii");
  for (std::size_t i = 0; i < radii.size(); ++i)
    if (!(radii[i] > 0) || (i > 0 && !(radii[i] > radii[i - 1])))
      throw std::invalid_argument("R-grid must be positive and increasing");
}

}  // namespace variation_detail

// -1/(256 pi^2) * flux of grad(theta_ijij - Delta tr theta) through |x| = R, extrapolated in R.
inline FluxResult first_variation_pole(const SymTensorField& theta, const std::vector<double>& radii = default_flux_radii(),
                                       int n_theta = 24) {
  variation_detail::check_radii(radii);
  if (theta.decay() > 0.0) throw std::domain_error("theta must be bounded at infinity");
  auto s = sphere_rule(n_theta);
  std::vector<double> flux;
  for (double R : radii) {
    Accumulator acc;
    for (std::size_t j = 0; j < s.n.size(); ++j) {
      auto F = ddmlt_jet(theta.jet<3>(R * s.n[j]));
      double dn = F.partial(1, 0, 0) * s.n[j][0] + F.partial(0, 1, 0) * s.n[j][1] + F.partial(0, 0, 1) * s.n[j][2];
      acc.add(s.w[j] * dn);
    }
    flux.push_back(kFluxPrefactor * R * R * acc.value());
  }
  const double first = std::abs(flux.front()), last = std::abs(flux.back());
  if (last > first && last > 1e-13) throw std::runtime_error("flux not decaying along R-grid");
  return variation_detail::finish_limit(radii, flux);
}

// nu^(1)(N, h) = 16 int G_N P^(1) G_N dmu = 1/(16 pi^2) lim int_{|x|<=R} Delta(theta_ijij - Delta tr theta) dx,
// evaluated as a volume integral on geometric shells.
inline FluxResult nu_first_variation(const SymTensorField& theta, const std::vector<double>& radii = default_flux_radii(),
                                     int n_gl = 12, int n_theta = 20) {
  variation_detail::check_radii(radii);
  if (theta.decay() > 0.0) throw std::domain_error("theta must be bounded at infinity");
  std::vector<double> bounds{0.0};
  for (int k = 6; k >= 0; --k) bounds.push_back(radii[0] / std::pow(2.0, k));
  for (std::size_t i = 1; i < radii.size(); ++i) {
    int pieces = std::max(1, int(std::ceil(std::log2(radii[i] / radii[i - 1]) - 1e-12)));
    for (int k = 1; k <= pieces; ++k) bounds.push_back(radii[i - 1] * std::pow(radii[i] / radii[i - 1], double(k) / pieces));
  }
  auto s = sphere_rule(n_theta);
  std::vector<double> samples;
  Accumulator acc;
  std::size_t next = 0;
  for (std::size_t b = 1; b < bounds.size(); ++b) {
    auto gl = gauss_legendre(n_gl, bounds[b - 1], bounds[b]);
    for (int i = 0; i < n_gl; ++i)
      for (std::size_t j = 0; j < s.n.size(); ++j) {
        const double r = gl.x[i];
        auto F = ddmlt_jet(theta.jet<4>(r * s.n[j]));
        acc.add(gl.w[i] * r * r * s.w[j] * flat_laplacian(F).c[0]);
      }
    if (next < radii.size() && std::abs(bounds[b] - radii[next]) <= 1e-12 * radii[next]) {
      samples.push_back(acc.value() / (16 * M_PI * M_PI));
      ++next;
    }
  }
  return variation_detail::finish_limit(radii, samples);
}

// ---- first variation off the diagonal -----------------------------------------------

// h_ijij (double covariant divergence) and tr h for the round metric at a north-chart point.
struct RoundContractions {
  double hijij = 0;
  double trh = 0;
};

inline RoundContractions round_contractions(const SymTensorField& h, const Vec3d& x) {
  static const MetricField g = round_metric();
  LocalGeometry<2> geo(g.g.jet<2>(x));
  auto hj = h.jet<2>(x);
  auto d2 = geo.covariant(geo.covariant(as_tensor(hj)));
  RoundContractions r;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c)
        for (int e = 0; e < 3; ++e) r.hijij += geo.ginv(a, c).c[0] * geo.ginv(b, e).c[0] * d2(a, b, c, e).c[0];
  r.trh = geo.trace(hj).c[0];
  return r;
}

// tr_g h at N from the south chart, where g(N) = 4 delta.
inline double trace_at_north(const SphereTensor& h) {
  if (!h.south) throw std::invalid_argument("south-chart representative required");
  auto v = h.south({0, 0, 0});
  return 0.25 * (v(0, 0) + v(1, 1) + v(2, 2));
}

struct OffDiagonalConstants {
  double hijij_integral = 0;  // int (Delta G_N - 5/2 G_N) h_ijij dmu
  double trace_integral = 0;  // int (Delta G_N + 5/16 G_N) tr h dmu
  double trh_north = 0;
  double quadrature_error = 0;
  // I(N,q,h) = kernel(q) + G(N,q) * weight()
  double weight() const { return -0.125 * hijij_integral - 0.125 * trace_integral + 0.125 * trh_north; }
};

inline OffDiagonalConstants off_diagonal_constants(const SphereTensor& h, const SpaceQuadrature& q = {}) {
  OffDiagonalConstants c;
  auto run = [&](int n_r, int n_th, double& a2, double& a3) {
    SpaceQuadrature qq = q;
    qq.n_r = n_r;
    qq.n_theta = n_th;
    auto gl = gauss_legendre(n_r, 0.0, 1.0);
    auto s = sphere_rule(n_th);
    Accumulator A2, A3;
    for (int i = 0; i < n_r; ++i) {
      const double u = gl.x[i], rad = qq.scale * u / (1 - u), jac = qq.scale / ((1 - u) * (1 - u));
      for (std::size_t j = 0; j < s.n.size(); ++j) {
        Vec3d x = qq.center + rad * s.n[j];
        double t2 = 0.5 * (norm2(x) + 1);
        double w = gl.w[i] * jac * rad * rad * s.w[j] / (t2 * t2 * t2);
        auto rc = round_contractions(h.north, x);
        double G = green_pole(x), LG = green_pole_laplacian(x);
        A2.add(w * (LG - 2.5 * G) * rc.hijij);
        A3.add(w * (LG + 5.0 / 16.0 * G) * rc.trh);
      }
    }
    a2 = A2.value();
    a3 = A3.value();
  };
  double c2, c3;
  run(q.n_r, q.n_theta, c.hijij_integral, c.trace_integral);
  run((3 * q.n_r) / 4, (3 * q.n_theta) / 4, c2, c3);
  c.quadrature_error = 0.125 * (std::abs(c2 - c.hijij_integral) + std::abs(c3 - c.trace_integral));
  c.trh_north = trace_at_north(h);
  return c;
}

struct OffDiagonalTerms {
  double kernel = 0;  // the R^3 integral against the 1/|x-y| kernel
  double hijij = 0;
  double trace = 0;
  double pole = 0;
  double total = 0;
  double quadrature_error = 0;
};

namespace variation_detail {

inline double smooth_kernel_part(const Vec3d& x) {
  double s2 = norm2(x) + 1;
  return -2.0 / std::sqrt(s2) - 1.0 / (s2 * std::sqrt(s2));
}

}  // namespace variation_detail

namespace variation_detail {

// erf(r) / r, even and entire
inline double erf_over(double r) {
  if (r < 1e-4) return 2 / std::sqrt(M_PI) * (1 - r * r / 3);
  return std::erf(r) / r;
}

}  // namespace variation_detail

// -1/(256 pi^2) / sqrt(|y|^2+1) int F(x) (2/|x-y| - 2/sqrt(|x|^2+1) - (|x|^2+1)^(-3/2)) dx.
// 1/r = erf(r/rho)/r + erfc(r/rho)/r: the smooth part goes on the origin-centred rule, the
// localized singular part on a polar rule about y.
inline IntegralEstimate off_diagonal_kernel(const SymTensorField& theta, const Vec3d& y, const SpaceQuadrature& q = {},
                                            int n_local = 48, double rho = 0.5) {
  if (theta.decay() > 0.0) throw std::domain_error("theta must be bounded at infinity");
  auto F = [&](const Vec3d& x) { return ddmlt_jet(theta.jet<2>(x)).c[0]; };
  auto smooth = space_integral(
      [&](const Vec3d& x) {
        return F(x) * (2 * variation_detail::erf_over(norm(x - y) / rho) / rho + variation_detail::smooth_kernel_part(x));
      },
      q, theta.decay() - 2.0 - 2.0);
  SpaceQuadrature ql;
  ql.n_r = n_local;
  ql.n_theta = n_local / 2;
  ql.center = y;
  ql.scale = rho;
  auto local = space_integral(
      [&](const Vec3d& x) {
        const double r = norm(x - y);
        return F(x) * 2 * std::erfc(r / rho) / r;
      },
      ql, -kInf);
  smooth.value += local.value;
  smooth.quadrature_error += local.quadrature_error;
  return scaled(smooth, kFluxPrefactor / std::sqrt(norm2(y) + 1));
}

// Grid route: trapezoid on c + [-L, L]^3, a ball of radius 2h around y excised and
// replaced by the kernel integrated against F(y).
inline double off_diagonal_kernel_grid(const SymTensorField& theta, const Vec3d& y, double L, int n,
                                       const Vec3d& c = {0, 0, 0}) {
  auto quad = box_trapezoid(c, L, n);
  const double h = 2 * L / n, rho = 2 * h;
  Accumulator acc;
  for (std::size_t i = 0; i < quad.size(); ++i) {
    const Vec3d& x = quad.x[i];
    double r = norm(x - y);
    if (r < rho) continue;
    double F = ddmlt_jet(theta.jet<2>(x)).c[0];
    acc.add(quad.w[i] * F * (2.0 / r + variation_detail::smooth_kernel_part(x)));
  }
  double Fy = ddmlt_jet(theta.jet<2>(y)).c[0];
  acc.add(Fy * (4 * M_PI * rho * rho + variation_detail::smooth_kernel_part(y) * 4.0 / 3.0 * M_PI * rho * rho * rho));
  return kFluxPrefactor / std::sqrt(norm2(y) + 1) * acc.value();
}

// I(N, q, h) for q at north-chart point y.
inline OffDiagonalTerms i_offdiagonal(const SphereTensor& h, const Vec3d& y, const OffDiagonalConstants& k,
                                      const SpaceQuadrature& q = {}) {
  auto theta = pullback_theta(h.north);
  auto e = off_diagonal_kernel(theta, y, q);
  const double G = green_pole(y);
  OffDiagonalTerms t;
  t.kernel = e.value;
  t.hijij = -0.125 * G * k.hijij_integral;
  t.trace = -0.125 * G * k.trace_integral;
  t.pole = 0.125 * G * k.trh_north;
  t.total = t.kernel + t.hijij + t.trace + t.pole;
  t.quadrature_error = e.quadrature_error + e.tail_bound + std::abs(G) * k.quadrature_error;
  return t;
}

inline OffDiagonalTerms i_offdiagonal(const SphereTensor& h, const Vec3d& y, const SpaceQuadrature& q = {}) {
  return i_offdiagonal(h, y, off_diagonal_constants(h, q), q);
}

// ---- gauge ------------------------------------------------------------------------

// A_i = sum_m a[i][m] mono_m with monomials xx, xy, xz, yy, yz, zz.
struct QuadPolyVectorField {
  std::array<std::array<double, 6>, 3> a{};

  static constexpr std::array<std::array<int, 2>, 6> mono{{{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}}};

  template <class T>
  Vec3<T> operator()(const Vec3<T>& y) const {
    Vec3<T> r{T(0.0), T(0.0), T(0.0)};
    for (int i = 0; i < 3; ++i)
      for (int m = 0; m < 6; ++m)
        if (a[i][m] != 0.0) r[i] = r[i] + a[i][m] * y[mono[m][0]] * y[mono[m][1]];
    return r;
  }
};

// H_ij = sum_k c[sym(i,j)][k] x_k
struct LinearFormMatrix {
  std::array<std::array<double, 3>, 6> c{};

  double& at(int i, int j, int k) { return c[sym_index(i, j)][k]; }
  double at(int i, int j, int k) const { return c[sym_index(i, j)][k]; }
};

// d_i A_j + d_j A_i
inline LinearFormMatrix symmetric_gradient(const QuadPolyVectorField& A) {
  LinearFormMatrix H;
  auto dcoef = [](int i, int m, int k) {
    const auto& e = QuadPolyVectorField::mono[m];
    return double((e[0] == i && e[1] == k) + (e[1] == i && e[0] == k));
  };
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        double s = 0;
        for (int m = 0; m < 6; ++m) s += A.a[j][m] * dcoef(i, m, k) + A.a[i][m] * dcoef(j, m, k);
        H.at(i, j, k) = s;
      }
  return H;
}

inline double max_abs_difference(const LinearFormMatrix& a, const LinearFormMatrix& b) {
  double m = 0;
  for (int s = 0; s < 6; ++s)
    for (int k = 0; k < 3; ++k) m = std::max(m, std::abs(a.c[s][k] - b.c[s][k]));
  return m;
}

namespace variation_detail {

inline const Eigen::FullPivLU<Eigen::Matrix<double, 18, 18>>& gauge_lu() {
  static const auto lu = [] {
    Eigen::Matrix<double, 18, 18> m;
    for (int col = 0; col < 18; ++col) {
      QuadPolyVectorField A;
      A.a[col / 6][col % 6] = 1.0;
      auto H = symmetric_gradient(A);
      for (int row = 0; row < 18; ++row) m(row, col) = H.c[row / 3][row % 3];
    }
    return Eigen::FullPivLU<Eigen::Matrix<double, 18, 18>>(m);
  }();
  return lu;
}

}  // namespace variation_detail

// The unique A in P_2^3 with d_i A_j + d_j A_i = H_ij.
inline QuadPolyVectorField gauge_linear_solve(const LinearFormMatrix& H) {
  const auto& lu = variation_detail::gauge_lu();
  if (lu.rank() != 18) throw std::logic_error("gauge system is singular");
  Eigen::Matrix<double, 18, 1> b;
  for (int row = 0; row < 18; ++row) b(row) = H.c[row / 3][row % 3];
  Eigen::Matrix<double, 18, 1> x = lu.solve(b);
  QuadPolyVectorField A;
  for (int col = 0; col < 18; ++col) A.a[col / 6][col % 6] = x(col);
  return A;
}

struct GaugeSolution {
  Mat3<double> alpha1{};  // alpha1_i = sum_k alpha1[i][k] y_k
  QuadPolyVectorField alpha2;
  double cutoff_radius = 1.0;
  VectorField X;            // south chart
  SphereTensor lie;         // L_X g
  SphereTensor gauged;      // h - L_X g
  SymTensorField theta;     // tau^4 (h - L_X g) in the north chart
  double residual_jet = 0;  // max |value| and |first derivative| of h - L_X g at N

  // North-chart radii splitting the cutoff shell 1/(2r) <= |x| <= 1/r into `panels` pieces.
  std::vector<double> cutoff_breaks(int panels = 4) const {
    std::vector<double> b;
    const double lo = 0.5 / cutoff_radius, hi = 1.0 / cutoff_radius;
    for (int i = 0; i <= panels; ++i) b.push_back(lo + (hi - lo) * i / panels);
    return b;
  }
};

// Finds X supported near N with (h - L_X g)(N) = 0 and D(h - L_X g)(N) = 0.
// Lowered components of X are alpha = alpha1 + alpha2 in the south chart, times a cutoff
// equal to 1 on |y| <= r and 0 on |y| >= 2 r.
inline GaugeSolution gauge_normalize(const SphereTensor& h, double cutoff_radius = 1.0) {
  if (!h.south || !h.north) throw std::invalid_argument("gauge_normalize needs both chart representatives");
  if (!(cutoff_radius > 0)) throw std::invalid_argument("cutoff radius must be positive");
  GaugeSolution s;
  s.cutoff_radius = cutoff_radius;
  auto j = h.south.jet<1>({0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) s.alpha1[i][k] = 0.5 * j(i, k).c[0];
  LinearFormMatrix H;
  for (int i = 0; i < 3; ++i)
    for (int l = i; l < 3; ++l) {
      H.at(i, l, 0) = j(i, l).partial(1, 0, 0);
      H.at(i, l, 1) = j(i, l).partial(0, 1, 0);
      H.at(i, l, 2) = j(i, l).partial(0, 0, 1);
    }
  s.alpha2 = gauge_linear_solve(H);

  FieldInfo info;
  info.decay = -kInf;
  info.label = "gauge(" + h.label + ")";
  const Mat3<double> a1 = s.alpha1;
  const QuadPolyVectorField a2 = s.alpha2;
  const double rc2 = cutoff_radius * cutoff_radius;
  s.X = make_vector(
      [a1, a2, rc2](const auto& y) {
        using T = scalar_of_t<decltype(y)>;
        T r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        T t2 = (r2 + 1.0) * 0.5;
        T eta = smooth_cutoff(1.0 + (r2 / rc2 - 1.0) / 3.0);
        Vec3<T> q = a2(y);
        Vec3<T> r;
        for (int i = 0; i < 3; ++i) {
          T lin = a1[i][0] * y[0] + a1[i][1] * y[1] + a1[i][2] * y[2];
          r[i] = t2 * t2 * eta * (lin + q[i]);
        }
        return r;
      },
      info);

  auto lie_south = pushforward_theta(lie_derivative_round(s.X));
  auto lie_north = south_to_north(lie_south, -4.0);
  s.lie = {lie_north, lie_south, "lie(" + h.label + ")"};

  auto gn = h.north - lie_north;
  FieldInfo ni = gn.info();
  ni.decay = -6.0;
  ni.max_order = std::min(h.north.info().max_order, lie_north.info().max_order);
  s.gauged = {gn.with_info(ni), h.south - lie_south, "gauged(" + h.label + ")"};
  s.theta = pullback_theta(s.gauged.north);

  auto k = s.gauged.south.jet<1>({0, 0, 0});
  for (int c = 0; c < 6; ++c) {
    s.residual_jet = std::max(s.residual_jet, std::abs(k.v[c].c[0]));
    s.residual_jet = std::max(s.residual_jet, std::abs(k.v[c].partial(1, 0, 0)));
    s.residual_jet = std::max(s.residual_jet, std::abs(k.v[c].partial(0, 1, 0)));
    s.residual_jet = std::max(s.residual_jet, std::abs(k.v[c].partial(0, 0, 1)));
  }
  return s;
}

// ---- transverse traceless witnesses ---------------------------------------------------

// Linearized Cotton-York tensor of the flat-space perturbation S:
// C_ij = eps_ikl d_k (R_lj - R delta_lj / 4), trace-free and divergence-free for any S.
template <int M>
Sym3<Jet<M>> cotton_york_jet(const Sym3<Jet<M>>& S) {
  Vec3<Jet<M>> div = divergence_jet(S);
  Jet<M> tr = trace(S);
  Sym3<Jet<M>> Rc;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) Rc(i, j) = 0.5 * (d(div[j], i) + d(div[i], j) - flat_laplacian(S(i, j)) - d(d(tr, i), j));
  Jet<M> R = trace(Rc);
  auto B = [&](int l, int j) { return Rc(l, j) - (l == j ? 0.25 * R : Jet<M>(0.0)); };
  static constexpr int eps_next[3][2] = {{1, 2}, {2, 0}, {0, 1}};
  Sym3<Jet<M>> C;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const int k = eps_next[i][0], l = eps_next[i][1];
      Jet<M> a = d(B(l, j), k) - d(B(k, j), l);
      const int k2 = eps_next[j][0], l2 = eps_next[j][1];
      Jet<M> b = d(B(l2, i), k2) - d(B(k2, i), l2);
      C(i, j) = 0.5 * (a + b);
    }
  return C;
}

inline SymTensorField cotton_york(const SymTensorField& S) {
  FieldInfo info;
  info.decay = shifted_decay(S.decay(), -3.0);
  info.max_order = S.info().max_order - 3;
  info.label = "cy(" + S.info().label + ")";
  return make_sym(
      [S](const auto& x) { return with_derivatives<3, SymKind>(x, [&](const auto& y) { return cotton_york_jet(S(y)); }); },
      info);
}

// Worst violation of tr kappa = 0 and d_j (tau^-6 kappa_ij) = 0 over the points, relative to the local size.
inline double tt_condition_defect(const SymTensorField& kappa, const std::vector<Vec3d>& points) {
  double worst = 0;
  for (const auto& x : points) {
    auto p = seed<1>(x);
    auto w = tau_pow(p, -6.0);
    auto k = kappa.jet<1>(x);
    double size = 1e-300, tr = 0;
    for (int c = 0; c < 6; ++c) size = std::max(size, std::abs(k.v[c].c[0]));
    for (int i = 0; i < 3; ++i) tr += k(i, i).c[0];
    worst = std::max(worst, std::abs(tr) / (1 + size));
    const double wt = w.c[0];
    for (int i = 0; i < 3; ++i) {
      double div = 0, scale = 0;
      for (int jx = 0; jx < 3; ++jx) {
        auto term = d(w * k(i, jx), jx).c[0];
        div += term;
        scale = std::max(scale, std::abs(term));
      }
      worst = std::max(worst, std::abs(div) / (wt + scale));
    }
  }
  return worst;
}

// int <h, k> dmu = int theta_ij kappa_ij tau^-6 dx; kappa must satisfy the TT conditions.
inline double tt_orthogonality_residual(const SymTensorField& theta, const SymTensorField& kappa, const Cubature& quad,
                                        const std::vector<Vec3d>& check_points, double tol = 1e-8) {
  if (tt_condition_defect(kappa, check_points) > tol)
    throw std::invalid_argument("kappa is not trace-free and divergence-free");
  return integrate(quad, [&](const Vec3d& x) {
    auto t = theta(x);
    auto k = kappa(x);
    double s = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s += t(i, j) * k(i, j);
    double t2 = 0.5 * (norm2(x) + 1);
    return s / (t2 * t2 * t2);
  });
}

}  // namespace s3p
