#pragma once

#include <fftw3.h>

#include <algorithm>
#include <boost/math/special_functions/polygamma.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "catalog.hpp"
#include "expansion.hpp"
#include "geometry.hpp"
#include "grid.hpp"
#include "green.hpp"
#include "quadrature.hpp"
#include "variation.hpp"

namespace s3p {

inline constexpr Vec4 kNorthPole{0, 0, 0, 1};
inline constexpr Vec4 kSouthPole{0, 0, 0, -1};

// Eigenvalue of P = Delta^2 + Delta/2 - 15/16 on degree-k harmonics.
inline double paneitz_eigenvalue(int k) {
  const double e = k * (k + 2.0);
  return e * e - 0.5 * e - 15.0 / 16.0;
}

// sum_m Y_km(p)^2, independent of p
inline double harmonic_weight(int k) { return (k + 1.0) * (k + 1.0) / (2 * M_PI * M_PI); }

inline int harmonic_count(int L) { return (L + 1) * (L + 2) * (2 * L + 3) / 6; }

// Y_klm = A_kl sin^l(chi) C^(l+1)_(k-l)(cos chi) Y_lm(n), with X = (sin(chi) n, cos(chi)).
// Ordered by k, then l = 0..k, then m = -l..l.
struct HarmonicIndex {
  int k, l, m;
};

inline std::vector<HarmonicIndex> harmonic_table(int L) {
  std::vector<HarmonicIndex> t;
  t.reserve(harmonic_count(L));
  for (int k = 0; k <= L; ++k)
    for (int l = 0; l <= k; ++l)
      for (int m = -l; m <= l; ++m) t.push_back({k, l, m});
  return t;
}

inline std::vector<double> harmonic_values(const Vec4& X, int L) {
  const double r = std::sqrt(X[0] * X[0] + X[1] * X[1] + X[2] * X[2] + X[3] * X[3]);
  if (!(std::abs(r - 1) < 1e-10)) throw std::invalid_argument("point is not on the unit sphere");
  const double c = std::clamp(X[3], -1.0, 1.0);
  const double s = std::sqrt(std::max(0.0, 1 - c * c));
  double theta = 0, phi = 0;
  if (s > 0) {
    theta = std::acos(std::clamp(X[2] / s, -1.0, 1.0));
    phi = std::atan2(X[1], X[0]);
  }
  // real spherical harmonics on S^2
  std::vector<std::vector<double>> ylm(L + 1);
  for (int l = 0; l <= L; ++l) {
    ylm[l].resize(2 * l + 1);
    for (int m = -l; m <= l; ++m) {
      const double p = std::sph_legendre(l, std::abs(m), theta);
      ylm[l][m + l] = m == 0 ? p : (m > 0 ? M_SQRT2 * p * std::cos(m * phi) : M_SQRT2 * p * std::sin(-m * phi));
    }
  }
  std::vector<double> out;
  out.reserve(harmonic_count(L));
  for (int k = 0; k <= L; ++k)
    for (int l = 0; l <= k; ++l) {
      const int n = k - l;
      const double lam = l + 1.0;
      double c0 = 1, c1 = 2 * lam * c, cn = n == 0 ? c0 : c1;
      for (int j = 2; j <= n; ++j) {
        cn = (2 * c * (j + lam - 1) * c1 - (j + 2 * lam - 2) * c0) / j;
        c0 = c1;
        c1 = cn;
      }
      const double logA2 = std::lgamma(n + 1.0) + std::log(k + 1.0) + 2 * std::lgamma(l + 1.0) + (2 * l + 1) * std::log(2.0) -
                           std::log(M_PI) - std::lgamma(k + l + 2.0);
      const double radial = std::exp(0.5 * logA2) * std::pow(s, l) * cn;
      for (int m = -l; m <= l; ++m) out.push_back(radial * ylm[l][m + l]);
    }
  return out;
}

inline Vec4 normalized(Vec4 X) {
  const double r = std::sqrt(X[0] * X[0] + X[1] * X[1] + X[2] * X[2] + X[3] * X[3]);
  for (auto& v : X) v /= r;
  return X;
}

// Coefficients in the basis of harmonic_table(L).
struct SphereExpansion {
  int L = 0;
  std::vector<double> c;
  double tail_estimate = 0;  // L2 mass beyond degree L, where known

  explicit SphereExpansion(int degree = 0) : L(degree), c(harmonic_count(degree), 0.0) {}
  double operator()(const Vec4& X) const {
    auto y = harmonic_values(X, L);
    Accumulator a;
    for (std::size_t i = 0; i < c.size(); ++i) a.add(c[i] * y[i]);
    return a.value();
  }
  double l2_norm2() const {
    Accumulator a;
    for (double v : c) a.add(v * v);
    return a.value();
  }
};

inline SphereExpansion paneitz_sphere(const SphereExpansion& u) {
  SphereExpansion r = u;
  auto t = harmonic_table(u.L);
  for (std::size_t i = 0; i < r.c.size(); ++i) r.c[i] *= paneitz_eigenvalue(t[i].k);
  return r;
}

inline double energy(const SphereExpansion& u, const SphereExpansion& v) {
  if (u.L != v.L) throw std::invalid_argument("expansions have different truncation degrees");
  auto t = harmonic_table(u.L);
  Accumulator a;
  for (std::size_t i = 0; i < u.c.size(); ++i) a.add(paneitz_eigenvalue(t[i].k) * u.c[i] * v.c[i]);
  return a.value();
}

// Product rule on S^3: Gauss-Legendre in chi with weight sin^2, sphere rule on S^2.
struct SphereCubature {
  std::vector<Vec4> x;
  std::vector<double> w;
};

inline SphereCubature sphere3_rule(int n_chi, int n_theta) {
  SphereCubature q;
  auto gl = gauss_legendre(n_chi, 0.0, M_PI);
  auto s2 = sphere_rule(n_theta);
  for (int i = 0; i < n_chi; ++i) {
    const double sc = std::sin(gl.x[i]), cc = std::cos(gl.x[i]);
    for (std::size_t j = 0; j < s2.n.size(); ++j) {
      q.x.push_back({sc * s2.n[j][0], sc * s2.n[j][1], sc * s2.n[j][2], cc});
      q.w.push_back(gl.w[i] * sc * sc * s2.w[j]);
    }
  }
  return q;
}

// L2 projection onto degrees <= L
inline SphereExpansion project(const std::function<double(const Vec4&)>& f, int L, int n_chi = 0) {
  if (n_chi <= 0) n_chi = L + 16;
  auto q = sphere3_rule(n_chi, n_chi);
  SphereExpansion u(L);
  std::vector<Accumulator> acc(u.c.size());
  for (std::size_t p = 0; p < q.x.size(); ++p) {
    auto y = harmonic_values(q.x[p], L);
    const double fw = f(q.x[p]) * q.w[p];
    for (std::size_t i = 0; i < y.size(); ++i) acc[i].add(fw * y[i]);
  }
  for (std::size_t i = 0; i < u.c.size(); ++i) u.c[i] = acc[i].value();
  return u;
}

// int (Delta u Delta v - 4 Rc(grad u, grad v) + 5/4 R grad u . grad v - 1/2 Q u v) dmu in the north chart
inline IntegralEstimate energy_integral(const MetricField& g, const ScalarField& u, const ScalarField& v,
                                        SpaceQuadrature q = {}) {
  auto f = [&](const Vec3d& x) {
    LocalGeometry<2> geo(g.g.jet<2>(x));
    auto rc = geo.ricci(geo.riemann());
    const double R = geo.trace(rc).c[0];
    const double Q = curvature_pipeline(g, x).q;
    auto uj = u.jet<2>(x), vj = v.jet<2>(x);
    const double lu = geo.laplacian(uj).c[0], lv = geo.laplacian(vj).c[0];
    double gg = 0, rr = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double ui = uj.c[1 + i], vj1 = vj.c[1 + j];
        gg += geo.ginv(i, j).c[0] * ui * vj1;
        double up = 0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) up += geo.ginv(i, a).c[0] * rc(a, b).c[0] * geo.ginv(b, j).c[0];
        rr += up * ui * vj1;
      }
    auto gx = g.g(x);
    const double det = gx(0, 0) * (gx(1, 1) * gx(2, 2) - gx(1, 2) * gx(1, 2)) -
                       gx(0, 1) * (gx(0, 1) * gx(2, 2) - gx(1, 2) * gx(0, 2)) +
                       gx(0, 2) * (gx(0, 1) * gx(1, 2) - gx(1, 1) * gx(0, 2));
    const double vol = std::sqrt(det);
    return (lu * lv - 4 * rr + 1.25 * R * gg - 0.5 * Q * uj.c[0] * vj.c[0]) * vol;
  };
  return space_integral(f, q, std::min(u.decay(), v.decay()) * 2 - 6.0);
}

// E(u) ||u^-1||_{L6}^2 on the round sphere; +inf when u touches zero.
inline double i4_evaluate(const ScalarField& u, SpaceQuadrature q = {}) {
  static const MetricField g = round_metric();
  double umin = kInf;
  auto inv6 = [&](const Vec3d& x) {
    const double t2 = 0.5 * (norm2(x) + 1);
    const double val = u(x);
    umin = std::min(umin, val);
    return std::pow(val, -6) / (t2 * t2 * t2);
  };
  auto l6 = space_integral(inv6, q, -6.0);
  inv6({0, 0, 0});
  if (!(umin > 1e-12)) return kInf;
  return energy_integral(g, u, u, q).value * std::cbrt(l6.value);
}

// int_{S^3} G_N^2 dmu
inline IntegralEstimate green_l2_norm2(int n_r = 96, int n_theta = 48) {
  SpaceQuadrature q;
  q.n_r = n_r;
  q.n_theta = n_theta;
  return space_integral(
      [](const Vec3d& x) {
        const double t2 = 0.5 * (norm2(x) + 1);
        const double G = green_pole(x);
        return G * G / (t2 * t2 * t2);
      },
      q, -8.0);
}

inline double green_l2_norm() { return std::sqrt(green_l2_norm2().value); }

// G(X, Y) = -|X - Y| / (8 pi) for points of the unit sphere in R^4
inline double green_sphere(const Vec4& X, const Vec4& Y) {
  double d2 = 0;
  for (int a = 0; a < 4; ++a) d2 += (X[a] - Y[a]) * (X[a] - Y[a]);
  return -std::sqrt(d2) / (8 * M_PI);
}

// int G_N P phi dmu, which should reproduce phi(N)
inline IntegralEstimate green_pairing(const ScalarField& phi, SpaceQuadrature q = {}) {
  static const MetricField g = round_metric();
  return space_integral(
      [&](const Vec3d& x) {
        const double t2 = 0.5 * (norm2(x) + 1);
        return green_pole(x) * paneitz_apply_exact(g, phi, x) / (t2 * t2 * t2);
      },
      q, -7.0);
}

// Conformal map of R^3 u {inf} built from elementary steps; tracks |dM| = Lambda.
struct MobiusMap {
  enum class Op { translate, dilate, rotate, invert };
  struct Step {
    Op op;
    Vec3d b{0, 0, 0};
    double s = 1;
    std::array<Vec3d, 3> R{};
  };
  std::vector<Step> steps;

  MobiusMap& translate(Vec3d b) {
    steps.push_back({Op::translate, b});
    return *this;
  }
  MobiusMap& dilate(double s) {
    steps.push_back({Op::dilate, {}, s});
    return *this;
  }
  MobiusMap& rotate(const std::array<Vec3d, 3>& R) {
    steps.push_back({Op::rotate, {}, 1, R});
    return *this;
  }
  MobiusMap& invert() {
    steps.push_back({Op::invert});
    return *this;
  }

  std::pair<Vec3d, double> apply(Vec3d x) const {
    double lam = 1;
    for (const auto& st : steps) switch (st.op) {
        case Op::translate: x = x + st.b; break;
        case Op::dilate:
          x = st.s * x;
          lam *= st.s;
          break;
        case Op::rotate: {
          Vec3d y{0, 0, 0};
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) y[i] += st.R[i][j] * x[j];
          x = y;
          break;
        }
        case Op::invert: {
          const double r2 = norm2(x);
          x = (1.0 / r2) * x;
          lam /= r2;
          break;
        }
      }
    return {x, lam};
  }

  // rho with M^* g = rho^-4 g for the round metric
  double rho(const Vec3d& x) const {
    auto [y, lam] = apply(x);
    const double ty = std::sqrt(0.5 * (norm2(y) + 1)), tx = std::sqrt(0.5 * (norm2(x) + 1));
    return ty / (tx * std::sqrt(lam));
  }
};

// max |G(Mx, My) - rho(x)^-1 rho(y)^-1 G(x, y)| over the pairs
inline double green_covariance_residual(const MobiusMap& M, const std::vector<std::pair<Vec3d, Vec3d>>& pairs) {
  double worst = 0;
  for (const auto& [x, y] : pairs) {
    const double lhs = green_eval(M.apply(x).first, M.apply(y).first);
    const double rhs = green_eval(x, y) / (M.rho(x) * M.rho(y));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

// ---- the constrained invariant nu_p ------------------------------------------------

namespace sphere_detail {

// sum over k > L of w_k / (sigma_k - nu), exact through polygamma series in m = k + 1
inline double secular_tail(int L, double nu) {
  const double root = std::sqrt(1 + nu);
  const double rp = 1.25 + root, rm = 1.25 - root;
  const int M = L + 2;
  // m^2 / ((m^2 - rp)(m^2 - rm)) = sum_j e_j m^(-2j-2), e_j = sum_{a+b=j} rp^a rm^b
  double total = 0;
  for (int j = 0; j < 400; ++j) {
    double e = 0;
    double p = 1;
    for (int a = 0; a <= j; ++a) {
      e += p * std::pow(rm, j - a);
      p *= rp;
    }
    const int s = 2 * j + 2;
    // sum_{m >= M} m^-s = psi^(s-1)(M) / (s-1)!
    const double z = boost::math::polygamma(s - 1, double(M)) / std::tgamma(double(s));
    const double term = e * z;
    total += term;
    if (std::abs(term) < 1e-18 * std::abs(total)) break;
  }
  return total / (2 * M_PI * M_PI);
}

}  // namespace sphere_detail

struct NuOptions {
  bool constrained = true;
  bool analytic_tail = true;  // include degrees above L through the exact tail of the secular sum
};

struct NuSolution {
  Vec4 pole{};
  int L = 0;
  double nu = 0;
  double alpha = 0;
  double nu_truncated = 0;  // Rayleigh-Ritz value in degrees <= L alone
  double alpha_truncated = 0;
  SphereExpansion u;  // degrees <= L of the unit-norm minimizer
  double el_residual = 0;
  double constraint_residual = 0;
  double green_correlation = 0;  // <u, G_p> / (|u| |G_p|) with |G_p| = 1/4
};

namespace sphere_detail {

struct SecularRoot {
  double nu;
  bool ok;
};

inline SecularRoot secular_root(const std::vector<double>& v2, const std::vector<HarmonicIndex>& t, int L, bool tail) {
  const double s0 = paneitz_eigenvalue(0), s1 = paneitz_eigenvalue(1);
  auto f = [&](double nu) {
    Accumulator a;
    for (std::size_t i = 0; i < v2.size(); ++i) a.add(v2[i] / (paneitz_eigenvalue(t[i].k) - nu));
    if (tail) a.add(secular_tail(L, nu));
    return a.value();
  };
  const double span = s1 - s0;
  double lo = s0 + 1e-12 * span, hi = s1 - 1e-12 * span;
  const double flo = f(lo), fhi = f(hi);
  if (!(flo < 0 && fhi > 0)) return {0, false};
  boost::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), iters);
  return {0.5 * (r.first + r.second), true};
}

}  // namespace sphere_detail

// inf E(u) / |u|^2 over u(p) = 0. The constrained minimizer has coefficients proportional
// to Y_i(p) / (sigma_i - nu), with nu the root of the secular sum in (sigma_0, sigma_1).
inline NuSolution nu_solve(const Vec4& p, int L, const NuOptions& opt = {}) {
  if (L < 2) throw std::invalid_argument("nu_solve needs L >= 2");
  NuSolution s;
  s.pole = normalized(p);
  s.L = L;
  auto t = harmonic_table(L);
  auto v = harmonic_values(s.pole, L);
  s.u = SphereExpansion(L);
  if (!opt.constrained) {
    s.nu = s.nu_truncated = paneitz_eigenvalue(0);
    s.u.c[0] = 1;
    return s;
  }
  std::vector<double> v2(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) v2[i] = v[i] * v[i];
  auto raw = sphere_detail::secular_root(v2, t, L, false);
  auto full = opt.analytic_tail ? sphere_detail::secular_root(v2, t, L, true) : raw;
  if (!raw.ok || !full.ok) throw std::logic_error("no constrained minimizer between the first two eigenvalues");
  s.nu_truncated = raw.nu;
  s.nu = full.nu;

  auto alpha_for = [&](double nu, bool tail) {
    // alpha = 1 / |sum_i Y_i(p) Y_i / (sigma_i - nu)|
    Accumulator n2;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = paneitz_eigenvalue(t[i].k) - nu;
      n2.add(v2[i] / (d * d));
    }
    if (tail) {
      const double h = 1e-6;
      n2.add((sphere_detail::secular_tail(L, nu + h) - sphere_detail::secular_tail(L, nu - h)) / (2 * h));
    }
    return 1 / std::sqrt(n2.value());
  };
  s.alpha_truncated = alpha_for(s.nu_truncated, false);

  const double mu = alpha_for(s.nu, opt.analytic_tail);
  Accumulator n2;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s.u.c[i] = mu * v[i] / (paneitz_eigenvalue(t[i].k) - s.nu);
    n2.add(s.u.c[i] * s.u.c[i]);
  }
  s.u.tail_estimate = std::sqrt(std::max(0.0, 1 - n2.value()));

  // alpha from P u - nu u = alpha delta_p paired with degrees 0..3
  Accumulator num, den;
  for (std::size_t i = 0; i < v.size() && t[i].k <= 3; ++i) {
    num.add((paneitz_eigenvalue(t[i].k) - s.nu) * s.u.c[i] * v[i]);
    den.add(v2[i]);
  }
  s.alpha = num.value() / den.value();

  Accumulator res, con, corr, g2;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double sig = paneitz_eigenvalue(t[i].k);
    const double r = (sig - s.nu) * s.u.c[i] - s.alpha * v[i];
    const double k2 = 1.0 + t[i].k * (t[i].k + 2.0);
    res.add(r * r / (k2 * k2));
    con.add(s.u.c[i] * v[i]);
    corr.add(s.u.c[i] * v[i] / sig);
  }
  s.el_residual = std::sqrt(res.value());
  s.constraint_residual = std::abs(con.value());
  s.green_correlation = corr.value() / 0.25;
  return s;
}

// ---- variations of nu at N -----------------------------------------------------------

// nu^(1)(N, h) = 16 int G_N P^(1) G_N dmu, by the flux limit.
inline FluxResult nu_first_variation(const SphereTensor& h, const std::vector<double>& radii = default_flux_radii()) {
  return nu_first_variation(pullback_theta(h.north), radii);
}

// nu^(2)(N, h) = -16 II(N, N, h) for gauged h
inline IntegralEstimate nu_second_variation(const SymTensorField& gauged_theta, const SpaceQuadrature& q = {}) {
  return scaled(ii_quadform(gauged_theta, q), -16.0);
}

// U(x) = int F(x') / |x - x'| dx' at the nodes of a cube grid, for F supported in the cube.
// Free-space kernel truncated at the cube diameter, transformed exactly, on a 4x padded grid.
inline std::vector<double> newton_potential(const GridSpec& spec, const std::vector<double>& F) {
  const int n = spec.n[0];
  if (spec.n[1] != n || spec.n[2] != n) throw std::invalid_argument("newton_potential needs a cubic grid");
  const int N = 4 * n;
  const double h = spec.spacing;
  const double Lt = std::sqrt(3.0) * n * h;
  std::vector<std::complex<double>> w(std::size_t(N) * N * N, 0.0);
  auto at = [&](int i, int j, int k) -> std::complex<double>& { return w[std::size_t(i) + std::size_t(N) * (j + std::size_t(N) * k)]; };
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) at(i, j, k) = F[spec.index(i, j, k)];
  auto* p = reinterpret_cast<fftw_complex*>(w.data());
  fftw_plan fwd = fftw_plan_dft_3d(N, N, N, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_plan bwd = fftw_plan_dft_3d(N, N, N, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
  fftw_execute(fwd);
  const double dk = 2 * M_PI / (N * h);
  auto freq = [&](int m) { return dk * (m < N / 2 ? m : m - N); };
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < N; ++i) {
        const double kx = freq(i), ky = freq(j), kz = freq(k);
        const double kk = std::sqrt(kx * kx + ky * ky + kz * kz);
        double G;
        if (kk == 0) {
          G = 2 * M_PI * Lt * Lt;
        } else {
          const double sn = std::sin(0.5 * kk * Lt);
          G = 8 * M_PI * sn * sn / (kk * kk);
        }
        at(i, j, k) *= G;
      }
  fftw_execute(bwd);
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(bwd);
  std::vector<double> U(spec.count());
  const double scale = 1.0 / (double(N) * N * N);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) U[spec.index(i, j, k)] = at(i, j, k).real() * scale;
  return U;
}

struct NuSecondAssembly {
  double p2_term = 0;     // 16 int G_N P^(2) G_N dmu
  double cross_term = 0;  // 16 int P^(1) G_N I_N dmu
  double trace_term = 0;  // 8 int P^(1) G_N G_N tr h dmu
  double total = 0;
};

// Three-term assembly of nu^(2)(N, h) for theta supported in the cube [-R, R)^3.
// With g + th = tau^-4 (delta + t theta) and tau G_N constant, every term reduces to flat-space
// P^(k) 1 on the grid; I_N = kernel + G_N K_h, the kernel through newton_potential.
inline NuSecondAssembly nu_second_variation_assembled(const SymTensorField& theta, double off_diagonal_weight, double R,
                                                      int n) {
  if (theta.decay() != -kInf) throw std::domain_error("assembly needs a rapidly decaying theta");
  const auto spec = cube_grid(R, n);
  const double h3 = std::pow(spec.spacing, 3);
  static const MetricField flat = flat_metric();
  const ScalarField one = constant_scalar(1.0);
  std::vector<double> F(spec.count()), P1(spec.count()), P2(spec.count()), tr(spec.count());
  Accumulator c0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3d x = spec.node(i, j, k);
        const std::size_t idx = spec.index(i, j, k);
        F[idx] = ddmlt_jet(theta.jet<2>(x)).c[0];
        P1[idx] = p1_apply(flat, theta, one, x);
        P2[idx] = p2_one(flat, theta, x);
        auto v = theta(x);
        tr[idx] = v(0, 0) + v(1, 1) + v(2, 2);
        const double s2 = norm2(x) + 1;
        c0.add(F[idx] * (2 / std::sqrt(s2) + 1 / (s2 * std::sqrt(s2))) * h3);
      }
  auto U = newton_potential(spec, F);
  Accumulator A, B, C;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3d x = spec.node(i, j, k);
        const std::size_t idx = spec.index(i, j, k);
        const double s = std::sqrt(norm2(x) + 1);
        const double tau = s / M_SQRT2;
        const double IN = kFluxPrefactor / s * (2 * U[idx] - c0.value()) + green_pole(x) * off_diagonal_weight;
        A.add(P2[idx] * h3);
        B.add(P1[idx] * tau * IN * h3);
        C.add(P1[idx] * tr[idx] * h3);
      }
  NuSecondAssembly r;
  r.p2_term = 16 * A.value() / (32 * M_PI * M_PI);
  r.cross_term = -16 * B.value() / (4 * M_PI * M_SQRT2);
  r.trace_term = 16 * C.value() / (64 * M_PI * M_PI);
  r.total = r.p2_term + r.cross_term + r.trace_term;
  return r;
}

}  // namespace s3p
