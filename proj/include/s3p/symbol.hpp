#pragma once

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "field.hpp"
#include "grid.hpp"
#include "variation.hpp"

namespace s3p {

using Complex = std::complex<double>;
using CVec3 = std::array<Complex, 3>;

// A(xi): transform of theta at frequency xi
struct SymbolMatrix {
  Sym3<Complex> A;
  Vec3d xi{0, 0, 0};
};

namespace symbol_detail {

inline double norm2(const Sym3<Complex>& A) {
  double s = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += std::norm(A(i, j));
  return s;
}

inline Complex quad(const Sym3<Complex>& A, const Vec3d& x) {
  Complex s = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += x[i] * A(i, j) * x[j];
  return s;
}

// In-place 3D complex FFT of an n^3 block
inline void fft3(std::vector<Complex>& data, int n, int sign) {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan = fftw_plan_dft_3d(n, n, n, p, p, sign, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
}

}  // namespace symbol_detail

// -2|A xi|^2 |xi|^2 + 1/2 |xi^T A xi|^2 + Re(xi^T A xi conj(tr A)) |xi|^2 - 1/2 |tr A|^2 |xi|^4 + |A|^2 |xi|^4
inline double symbol_integrand(const SymbolMatrix& s) {
  const auto& A = s.A;
  const Vec3d& x = s.xi;
  const double n2 = dot(x, x);
  if (n2 == 0.0) return 0.0;
  double ax2 = 0;
  for (int i = 0; i < 3; ++i) {
    Complex r = 0;
    for (int j = 0; j < 3; ++j) r += A(i, j) * x[j];
    ax2 += std::norm(r);
  }
  const Complex q = symbol_detail::quad(A, x);
  const Complex tr = A(0, 0) + A(1, 1) + A(2, 2);
  return -2 * ax2 * n2 + 0.5 * std::norm(q) + 0.5 * (q * std::conj(tr)).real() * n2 +
         0.5 * (std::conj(q) * tr).real() * n2 - 0.5 * std::norm(tr) * n2 * n2 + symbol_detail::norm2(A) * n2 * n2;
}

// Householder reflector O with O e1 parallel to xi; O is symmetric and orthogonal.
inline std::array<Vec3d, 3> householder_frame(const Vec3d& xi) {
  const double r = norm(xi);
  if (r == 0.0) throw std::invalid_argument("householder frame needs xi != 0");
  Vec3d u{xi[0] / r, xi[1] / r, xi[2] / r};
  const double s = u[0] >= 0 ? 1.0 : -1.0;
  Vec3d v{u[0] + s, u[1], u[2]};
  const double vv = dot(v, v);
  std::array<Vec3d, 3> O;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) O[i][j] = (i == j ? 1.0 : 0.0) - 2 * v[i] * v[j] / vv;
  return O;
}

// (1/2 |b22 - b33|^2 + 2 |b23|^2) |xi|^4 with B = O^T A O
inline double rotated_symbol_value(const SymbolMatrix& s) {
  const double n2 = dot(s.xi, s.xi);
  if (n2 == 0.0) return 0.0;
  auto O = householder_frame(s.xi);
  auto b = [&](int p, int q) {
    Complex r = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r += O[i][p] * s.A(i, j) * O[j][q];
    return r;
  };
  return (0.5 * std::norm(b(1, 1) - b(2, 2)) + 2 * std::norm(b(1, 2))) * n2 * n2;
}

// Coordinates (a11, a22, a33, r a12, r a13, r a23), r = sqrt 2, so |A|^2 is the Euclidean norm.
inline Eigen::Matrix<Complex, 6, 1> symbol_coordinates(const Sym3<Complex>& A) {
  const double r = std::sqrt(2.0);
  Eigen::Matrix<Complex, 6, 1> c;
  c << A(0, 0), A(1, 1), A(2, 2), r * A(0, 1), r * A(0, 2), r * A(1, 2);
  return c;
}

inline Sym3<Complex> from_symbol_coordinates(const Eigen::Matrix<Complex, 6, 1>& c) {
  const double r = std::sqrt(2.0);
  Sym3<Complex> A;
  A(0, 0) = c(0);
  A(1, 1) = c(1);
  A(2, 2) = c(2);
  A(0, 1) = c(3) / r;
  A(0, 2) = c(4) / r;
  A(1, 2) = c(5) / r;
  return A;
}

// The integrand as a real symmetric form Q with symbol_integrand = c^H Q c.
inline Eigen::Matrix<double, 6, 6> symbol_form_matrix(const Vec3d& xi) {
  auto value = [&](const Eigen::Matrix<Complex, 6, 1>& c) { return symbol_integrand({from_symbol_coordinates(c), xi}); };
  Eigen::Matrix<double, 6, 6> Q;
  for (int a = 0; a < 6; ++a) {
    Eigen::Matrix<Complex, 6, 1> ea = Eigen::Matrix<Complex, 6, 1>::Zero();
    ea(a) = 1;
    Q(a, a) = value(ea);
  }
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      Eigen::Matrix<Complex, 6, 1> e = Eigen::Matrix<Complex, 6, 1>::Zero();
      e(a) = 1;
      e(b) = 1;
      Q(a, b) = Q(b, a) = 0.5 * (value(e) - Q(a, a) - Q(b, b));
    }
  return Q;
}

// Basis of the null forms alpha delta + beta xi^T + xi beta^T in symbol coordinates.
inline Eigen::Matrix<double, 6, 4> null_symbol_basis(const Vec3d& xi) {
  Eigen::Matrix<double, 6, 4> N;
  N.col(0) = symbol_coordinates(Sym3<Complex>::identity()).real();
  for (int k = 0; k < 3; ++k) {
    Sym3<Complex> B;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) B(i, j) = (i == k ? xi[j] : 0.0) + (j == k ? xi[i] : 0.0);
    N.col(1 + k) = symbol_coordinates(B).real();
  }
  return N;
}

// Frobenius distance from A to the null forms at xi.
inline double null_subspace_distance(const SymbolMatrix& s) {
  auto N = null_symbol_basis(s.xi);
  auto c = symbol_coordinates(s.A);
  Eigen::Matrix<Complex, 6, 4> Nc = N.cast<Complex>();
  Eigen::Matrix<Complex, 4, 1> coef = Nc.colPivHouseholderQr().solve(c);
  return (c - Nc * coef).norm();
}

// Unitary transform of theta sampled on the cube [-R, R)^3, n nodes per axis.
// Frequencies xi = (pi / R) k with k in [-n/2, n/2).
struct ThetaSpectrum {
  GridSpec space;
  double dxi = 0;
  std::array<std::vector<Complex>, 6> a;

  int n() const { return space.n[0]; }
  Vec3d xi(int i, int j, int k) const {
    auto f = [&](int m) { return dxi * (m < n() / 2 ? m : m - n()); };
    return {f(i), f(j), f(k)};
  }
  SymbolMatrix at(int i, int j, int k) const {
    SymbolMatrix s;
    const std::size_t idx = space.index(i, j, k);
    for (int c = 0; c < 6; ++c) s.A.v[c] = a[c][idx];
    s.xi = xi(i, j, k);
    return s;
  }
  // index of -xi
  std::array<int, 3> mirror(int i, int j, int k) const {
    const int m = n();
    return {(m - i) % m, (m - j) % m, (m - k) % m};
  }
};

namespace symbol_detail {

inline Complex origin_phase(const Vec3d& xi, const Vec3d& origin) {
  return std::exp(Complex(0, -(xi[0] * origin[0] + xi[1] * origin[1] + xi[2] * origin[2])));
}

}  // namespace symbol_detail

inline ThetaSpectrum theta_transform(const SymTensorField& theta, double R, int n) {
  if (!(theta.decay() < -1.5)) throw std::domain_error("theta is not square integrable");
  if (n % 2 != 0) throw std::invalid_argument("transform grid needs an even node count");
  ThetaSpectrum s;
  s.space = cube_grid(R, n);
  s.dxi = M_PI / R;
  const double h = s.space.spacing;
  const double norm = h * h * h / std::pow(2 * M_PI, 1.5);
  const std::size_t N = s.space.count();
  for (auto& c : s.a) c.assign(N, 0.0);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        auto v = theta(s.space.node(i, j, k));
        const std::size_t idx = s.space.index(i, j, k);
        for (int c = 0; c < 6; ++c) s.a[c][idx] = v.v[c];
      }
  for (auto& c : s.a) symbol_detail::fft3(c, n, FFTW_FORWARD);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = s.space.index(i, j, k);
        const Complex ph = norm * symbol_detail::origin_phase(s.xi(i, j, k), s.space.origin);
        for (auto& c : s.a) c[idx] *= ph;
      }
  return s;
}

// -1/(128 pi^2) sum over the frequency grid of symbol_integrand dxi^3
inline double parseval_ii(const ThetaSpectrum& s) {
  const int n = s.n();
  Accumulator acc;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) acc.add(symbol_integrand(s.at(i, j, k)));
  return kIiPrefactor * acc.value() * s.dxi * s.dxi * s.dxi;
}

// Largest component of theta on the faces of the cube; bounds the periodization error.
inline double boundary_max(const SymTensorField& theta, double R, int n) {
  auto g = cube_grid(R, n);
  double m = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (const Vec3d& x : {g.node(0, a, b), g.node(a, 0, b), g.node(a, b, 0)}) {
        auto v = theta(x);
        for (double c : v.v) m = std::max(m, std::abs(c));
      }
  return m;
}

// II through the frequency side. quadrature_error compares n against the nearest even 3n/4;
// tail_bound is the largest face value of theta.
inline IntegralEstimate parseval_ii(const SymTensorField& theta, double R, int n) {
  IntegralEstimate e;
  e.value = parseval_ii(theta_transform(theta, R, n));
  const int nc = 2 * ((3 * n) / 8);
  e.quadrature_error = std::abs(e.value - parseval_ii(theta_transform(theta, R, nc)));
  e.tail_bound = boundary_max(theta, R, n);
  return e;
}

using ScalarProfile = std::function<Complex(const Vec3d&)>;
using VectorProfile = std::function<CVec3(const Vec3d&)>;

struct NullSynthesis {
  SymTensorField theta;  // grid backed, evaluation at nodes only
  ThetaSpectrum spectrum;
  double imaginary_residual = 0;  // largest imaginary part dropped after the inverse transform
};

// theta with transform alpha delta + beta xi^T + xi beta^T. theta is real when
// alpha(-xi) = conj alpha(xi) and beta(-xi) = -conj beta(xi). Nyquist planes are set to zero.
inline NullSynthesis null_symbol_synthesize(const ScalarProfile& alpha, const VectorProfile& beta, double R, int n,
                                            double decay = -kInf) {
  if (n % 2 != 0) throw std::invalid_argument("transform grid needs an even node count");
  NullSynthesis out;
  ThetaSpectrum& s = out.spectrum;
  s.space = cube_grid(R, n);
  s.dxi = M_PI / R;
  const std::size_t N = s.space.count();
  for (auto& c : s.a) c.assign(N, 0.0);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Vec3d xi = s.xi(i, j, k);
        const Vec3d mxi{-xi[0], -xi[1], -xi[2]};
        const Complex al = alpha(xi), alm = alpha(mxi);
        const CVec3 be = beta(xi), bem = beta(mxi);
        double bad = std::abs(alm - std::conj(al)) - 1e-12 * (1 + std::abs(al));
        for (int c = 0; c < 3; ++c) bad = std::max(bad, std::abs(bem[c] + std::conj(be[c])) - 1e-12 * (1 + std::abs(be[c])));
        if (bad > 0) throw std::invalid_argument("symbol profiles are not conjugate symmetric");
        const std::size_t idx = s.space.index(i, j, k);
        if (i == n / 2 || j == n / 2 || k == n / 2) continue;
        for (int a = 0; a < 3; ++a)
          for (int b = a; b < 3; ++b) s.a[sym_index(a, b)][idx] = (a == b ? al : 0.0) + be[a] * xi[b] + be[b] * xi[a];
      }
  const double norm = s.dxi * s.dxi * s.dxi / std::pow(2 * M_PI, 1.5);
  std::array<std::shared_ptr<const GridData>, 6> comps;
  for (int c = 0; c < 6; ++c) {
    std::vector<Complex> w(N);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const std::size_t idx = s.space.index(i, j, k);
          w[idx] = s.a[c][idx] * std::conj(symbol_detail::origin_phase(s.xi(i, j, k), s.space.origin)) * norm;
        }
    symbol_detail::fft3(w, n, FFTW_BACKWARD);
    auto g = std::make_shared<GridData>();
    g->spec = s.space;
    g->values.resize(N);
    for (std::size_t idx = 0; idx < N; ++idx) {
      g->values[idx] = w[idx].real();
      out.imaginary_residual = std::max(out.imaginary_residual, std::abs(w[idx].imag()));
    }
    comps[c] = g;
  }
  out.theta = grid_tensor(comps, decay, "null-synthesis");
  return out;
}

}  // namespace s3p
