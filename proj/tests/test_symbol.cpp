#include <gtest/gtest.h>

#include <random>

#include "s3p/catalog.hpp"
#include "s3p/symbol.hpp"

using namespace s3p;

namespace {

SymbolMatrix random_symbol(std::mt19937_64& rng) {
  std::normal_distribution<double> N(0, 1);
  SymbolMatrix s;
  for (auto& a : s.A.v) a = Complex(N(rng), N(rng));
  const double scale = std::exp(N(rng));
  for (auto& x : s.xi) x = scale * N(rng);
  return s;
}

double scale_of(const SymbolMatrix& s) {
  double a2 = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a2 += std::norm(s.A(i, j));
  const double x2 = dot(s.xi, s.xi);
  return 1 + a2 * x2 * x2;
}

// |M|^2 - 3/2 |F|^2 with M and F transformed term by term
double transformed_real_space_integrand(const SymbolMatrix& s) {
  const Vec3d& x = s.xi;
  const double n2 = dot(x, x);
  CVec3 Ax{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) Ax[i] += s.A(i, j) * x[j];
  Complex tr = s.A(0, 0) + s.A(1, 1) + s.A(2, 2), q = 0;
  for (int i = 0; i < 3; ++i) q += x[i] * Ax[i];
  double m2 = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Complex M = -Ax[i] * x[j] - x[i] * Ax[j] + tr * x[i] * x[j] + n2 * s.A(i, j);
      m2 += std::norm(M);
    }
  return m2 - 1.5 * std::norm(-q + n2 * tr);
}

SymbolMatrix diag_symbol(Complex a, Complex b, Complex c, Vec3d xi) {
  SymbolMatrix s;
  s.A(0, 0) = a;
  s.A(1, 1) = b;
  s.A(2, 2) = c;
  s.xi = xi;
  return s;
}

std::vector<SymTensorField> route_suite() {
  return {
      gaussian_tensor({{1, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0),
      gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0.2, -0.1, 0.3}, 1.0),
      gaussian_tensor({{-0.5, 0.1, 0.6, 0.9, -0.2, 0.3}}, {0.4, 0.1, -0.2}, 1.2),
      gaussian_tensor({{0.3, 0.7, -0.4, 0.2, 0.5, -0.1}}, {-0.3, 0.2, 0.1}, 0.9),
  };
}

}  // namespace

TEST(SymbolIntegrand, HandExamples) {
  EXPECT_NEAR(symbol_integrand(diag_symbol(1, 1, 1, {1, 0, 0})), 0.0, 1e-15);
  EXPECT_NEAR(symbol_integrand(diag_symbol(0, 1, -1, {1, 0, 0})), 2.0, 1e-15);
  SymbolMatrix s;
  s.A(1, 2) = 1;
  s.xi = {1, 0, 0};
  EXPECT_NEAR(symbol_integrand(s), 2.0, 1e-15);
  s.xi = {0, 0, 0};
  EXPECT_EQ(symbol_integrand(s), 0.0);
  EXPECT_EQ(rotated_symbol_value(s), 0.0);
}

TEST(SymbolIntegrand, EqualsTransformedRealSpaceIntegrand) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    auto s = random_symbol(rng);
    EXPECT_NEAR(symbol_integrand(s), transformed_real_space_integrand(s), 1e-12 * scale_of(s));
  }
}

TEST(RotatedSymbol, AlongFirstAxisIsTheDirectFormula) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    auto s = random_symbol(rng);
    s.xi = {2.0, 0, 0};
    double direct = (0.5 * std::norm(s.A(1, 1) - s.A(2, 2)) + 2 * std::norm(s.A(1, 2))) * 16.0;
    EXPECT_NEAR(rotated_symbol_value(s), direct, 1e-13 * scale_of(s));
  }
}

TEST(RotatedSymbol, HouseholderFrameIsOrthogonal) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    auto s = random_symbol(rng);
    auto O = householder_frame(s.xi);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double g = 0;
        for (int k = 0; k < 3; ++k) g += O[k][i] * O[k][j];
        EXPECT_NEAR(g, i == j ? 1.0 : 0.0, 1e-14);
      }
    // first column parallel to xi
    const double c = O[0][0] * s.xi[0] + O[1][0] * s.xi[1] + O[2][0] * s.xi[2];
    EXPECT_NEAR(std::abs(c), norm(s.xi), 1e-13 * norm(s.xi));
  }
  EXPECT_THROW(householder_frame({0, 0, 0}), std::invalid_argument);
}

TEST(RotatedSymbol, IdentityAndNonnegativityOverRandomTrials) {
  std::mt19937_64 rng(6);
  double worst = 0, most_negative = 0;
  for (int t = 0; t < 100000; ++t) {
    auto s = random_symbol(rng);
    const double sc = scale_of(s);
    const double a = symbol_integrand(s), b = rotated_symbol_value(s);
    worst = std::max(worst, std::abs(a - b) / sc);
    most_negative = std::min(most_negative, a / sc);
  }
  EXPECT_LE(worst, 1e-12);
  EXPECT_GE(most_negative, -1e-12);
}

TEST(NullForms, VanishOnTheNullSubspace) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> N(0, 1);
  for (int t = 0; t < 200; ++t) {
    auto s = random_symbol(rng);
    Complex alpha(N(rng), N(rng));
    CVec3 beta{Complex(N(rng), N(rng)), Complex(N(rng), N(rng)), Complex(N(rng), N(rng))};
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) s.A(i, j) = (i == j ? alpha : 0.0) + beta[i] * s.xi[j] + beta[j] * s.xi[i];
    EXPECT_LE(std::abs(symbol_integrand(s)), 1e-12 * scale_of(s));
    EXPECT_LE(rotated_symbol_value(s), 1e-12 * scale_of(s));
    EXPECT_LE(null_subspace_distance(s), 1e-10 * std::sqrt(scale_of(s)));
  }
}

TEST(NullForms, KernelOfTheFormIsExactlyTheNullSubspace) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    auto s = random_symbol(rng);
    const double x2 = dot(s.xi, s.xi);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(symbol_form_matrix(s.xi));
    const auto& ev = es.eigenvalues();
    const double tol = 1e-12 * x2 * x2;
    int kernel = 0;
    for (int a = 0; a < 6; ++a) {
      EXPECT_GE(ev(a), -tol);
      if (ev(a) < tol) {
        ++kernel;
        SymbolMatrix k{from_symbol_coordinates(es.eigenvectors().col(a).cast<Complex>()), s.xi};
        EXPECT_LE(null_subspace_distance(k), 1e-6);
      }
    }
    EXPECT_EQ(kernel, 4);
    // away from the kernel the form is bounded below
    EXPECT_GT(ev(4), 1e-3 * x2 * x2);
    // a generic A is not null
    EXPECT_GT(null_subspace_distance(s), 1e-6);
  }
}

TEST(ThetaTransform, ZeroField) {
  auto s = theta_transform(gaussian_tensor({{0, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0), 4.0, 16);
  for (const auto& c : s.a)
    for (auto v : c) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(ThetaTransform, GaussianMatchesClosedForm) {
  auto s = theta_transform(gaussian_tensor({{1, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0), 6.0, 32);
  double worst = 0;
  for (int k = 0; k < 32; ++k)
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) {
        auto m = s.at(i, j, k);
        const double expect = std::pow(2.0, -1.5) * std::exp(-0.25 * dot(m.xi, m.xi));
        worst = std::max(worst, std::abs(m.A(0, 0) - expect));
        worst = std::max(worst, std::abs(m.A(1, 2)));
      }
  EXPECT_LE(worst, 1e-8);
}

TEST(ThetaTransform, ConjugateSymmetryAndDiscreteParseval) {
  auto theta = gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0.2, -0.1, 0.3}, 1.0);
  const int n = 24;
  auto s = theta_transform(theta, 5.0, n);
  double sym = 0;
  Accumulator freq, space;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        auto m = s.mirror(i, j, k);
        auto a = s.at(i, j, k), b = s.at(m[0], m[1], m[2]);
        for (int c = 0; c < 6; ++c) {
          sym = std::max(sym, std::abs(a.A.v[c] - std::conj(b.A.v[c])));
          const double w = (c == 0 || c == 3 || c == 5) ? 1.0 : 2.0;
          freq.add(w * std::norm(a.A.v[c]));
          const double v = theta(s.space.node(i, j, k)).v[c];
          space.add(w * v * v);
        }
      }
  EXPECT_LE(sym, 1e-15);
  const double h = s.space.spacing;
  EXPECT_NEAR(freq.value() * std::pow(s.dxi, 3), space.value() * h * h * h, 1e-13 * space.value() * h * h * h);
  EXPECT_THROW(theta_transform(theta, 5.0, 25), std::invalid_argument);
}

TEST(ThetaTransform, RejectsNonSquareIntegrable) {
  EXPECT_THROW(theta_transform(identity_tensor(), 5.0, 16), std::domain_error);
}

TEST(ParsevalIi, ZeroAndConformal) {
  EXPECT_EQ(parseval_ii(gaussian_tensor({{0, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0), 5.0, 16).value, 0.0);
  auto conf = pure_trace(gaussian({0.1, -0.2, 0.3}, 0.9));
  auto r = parseval_ii(conf, 6.0, 32);
  EXPECT_LE(std::abs(r.value), 1e-14);
}

TEST(ParsevalIi, GaussianTheta11MatchesClosedForm) {
  auto r = parseval_ii(gaussian_tensor({{1, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0), 6.0, 40);
  const double expect = -std::sqrt(M_PI / 2) / (64 * M_PI);
  EXPECT_NEAR(r.value, expect, 1e-10 * std::abs(expect));
  EXPECT_LE(r.quadrature_error, 1e-8 * std::abs(expect));
  EXPECT_LE(r.tail_bound, 1e-14);
}

TEST(ParsevalIi, AgreesWithRealSpaceRoute) {
  for (const auto& theta : route_suite()) {
    const double real = ii_quadform(theta).value;
    const double freq = parseval_ii(theta, 6.0, 40).value;
    EXPECT_LT(real, 0.0);
    EXPECT_LE(std::abs(real - freq) / std::max({std::abs(real), std::abs(freq), 1e-10}), 1e-6) << theta.info().label;
  }
}

TEST(ParsevalIi, LieDirectionIsNull) {
  auto kappa = lie_derivative_round(gaussian_vector({0.3, -0.7, 0.5}, {0.1, 0.2, -0.3}, 0.8));
  const double mag = -parseval_ii(gaussian_tensor({{1, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0), 6.0, 40).value;
  EXPECT_LE(std::abs(parseval_ii(kappa, 6.0, 40).value), 1e-8 * mag);
}

TEST(NullSynthesis, ZeroProfiles) {
  auto s = null_symbol_synthesize([](const Vec3d&) { return Complex(0); }, [](const Vec3d&) { return CVec3{}; }, 4.0, 16);
  auto g = cube_grid(4.0, 16);
  for (int i = 0; i < 16; i += 5) {
    auto v = s.theta(g.node(i, 3, 7));
    for (double c : v.v) EXPECT_EQ(c, 0.0);
  }
}

TEST(NullSynthesis, PureTraceProfile) {
  const double R = 6.0;
  const int n = 40;
  auto alpha = [](const Vec3d& xi) { return Complex(std::pow(2.0, -1.5) * std::exp(-0.25 * dot(xi, xi))); };
  auto s = null_symbol_synthesize(alpha, [](const Vec3d&) { return CVec3{}; }, R, n);
  EXPECT_LE(s.imaginary_residual, 1e-14);
  // alpha is the transform of exp(-|x|^2)
  auto g = cube_grid(R, n);
  double worst = 0;
  for (int k = 0; k < n; k += 3)
    for (int j = 0; j < n; j += 3)
      for (int i = 0; i < n; i += 3) {
        Vec3d x = g.node(i, j, k);
        auto v = s.theta(x);
        worst = std::max(worst, std::abs(v(0, 0) - std::exp(-dot(x, x))));
        worst = std::max(worst, std::abs(v(1, 1) - v(0, 0)) + std::abs(v(0, 1)));
      }
  EXPECT_LE(worst, 1e-8);
  EXPECT_LE(std::abs(parseval_ii(theta_transform(s.theta, R, n))), 1e-15);
}

TEST(NullSynthesis, GradientProfileIsNull) {
  const double R = 6.0;
  const int n = 32;
  auto beta = [](const Vec3d& xi) {
    const double g = std::exp(-0.3 * dot(xi, xi));
    return CVec3{Complex(xi[0] * g), Complex(0.5 * xi[1] * g), Complex(-xi[2] * g)};
  };
  auto s = null_symbol_synthesize([](const Vec3d&) { return Complex(0); }, beta, R, n);
  EXPECT_LE(s.imaginary_residual, 1e-12);
  const double ii = parseval_ii(theta_transform(s.theta, R, n));
  const double mag = -parseval_ii(gaussian_tensor({{1, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0), R, n).value;
  EXPECT_LE(std::abs(ii), 1e-10 * mag);
}

TEST(NullSynthesis, RejectsProfilesWithoutConjugateSymmetry) {
  auto beta = [](const Vec3d& xi) {
    const double g = std::exp(-0.3 * dot(xi, xi));
    return CVec3{Complex(0, xi[0] * g), Complex(0, xi[1] * g), Complex(0, xi[2] * g)};
  };
  EXPECT_THROW(null_symbol_synthesize([](const Vec3d&) { return Complex(0); }, beta, 4.0, 16), std::invalid_argument);
}
