#include <gtest/gtest.h>

#include <random>

#include "s3p/catalog.hpp"
#include "s3p/variation.hpp"

using namespace s3p;

namespace {

Mat4 random_symmetric4(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1, 1);
  Mat4 S{};
  for (int a = 0; a < 4; ++a)
    for (int b = a; b < 4; ++b) S[a][b] = S[b][a] = U(rng);
  return S;
}

Mat4 identity4() {
  Mat4 I{};
  for (int a = 0; a < 4; ++a) I[a][a] = 1;
  return I;
}

SymTensorField bump_theta() { return gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0.2, -0.1, 0.3}, 1.0); }

SymTensorField second_bump_theta() { return gaussian_tensor({{-0.5, 0.1, 0.6, 0.9, -0.2, 0.3}}, {0.4, 0.1, -0.2}, 1.2); }

SphereTensor from_theta(const SymTensorField& theta) { return sphere_tensor_from_north(pushforward_theta(theta)); }

// theta of a smooth tensor h on the sphere; bounded at infinity
SymTensorField theta_of(const SphereTensor& h) { return pullback_theta(h.north); }

}  // namespace

TEST(Green, PoleLaplacianMatchesRoundLaplacian) {
  auto g = round_metric();
  for (Vec3d x : {Vec3d{0, 0, 0}, Vec3d{0.3, -0.4, 1.2}, Vec3d{2, 1, -3}}) {
    LocalGeometry<2> geo(g.g.jet<2>(x));
    auto p = seed<2>(x);
    auto G = -1.0 / (4 * M_PI) / sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + 1.0);
    EXPECT_NEAR(geo.laplacian(G).c[0], green_pole_laplacian(x), 1e-13);
  }
}

TEST(SecondVariation, ZeroAndTraceNull) {
  EXPECT_EQ(ii_quadform(zero_tensor()).value, 0.0);
  auto theta = pure_trace(gaussian({0.1, -0.2, 0.3}, 0.9));
  double scale = ii_magnitude(theta).value;
  EXPECT_GT(scale, 1e-4);
  EXPECT_LE(std::abs(ii_quadform(theta).value), 1e-6 * scale);
}

TEST(SecondVariation, GaussianTheta11MatchesClosedForm) {
  // symbol integrand 1/2 |a|^2 (xi_2^2 + xi_3^2)^2, so II = -1/(256 pi^2) int |Delta_perp g|^2 dx
  FieldInfo info;
  info.decay = -kInf;
  auto theta = make_sym(
      [](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        Sym3<T> t;
        t(0, 0) = exp(-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
        return t;
      },
      info);
  const double expect = -std::sqrt(M_PI / 2) / (64 * M_PI);
  auto e = ii_quadform(theta);
  EXPECT_LT(e.value, 0.0);
  EXPECT_NEAR(e.value, expect, 1e-10 * std::abs(expect));
  EXPECT_LE(e.quadrature_error, 1e-9 * std::abs(expect));
}

TEST(SecondVariation, PolarizationAndSymmetry) {
  auto a = bump_theta(), b = second_bump_theta();
  double ab = ii_bilinear(a, b).value, ba = ii_bilinear(b, a).value;
  double pol = 0.25 * (ii_quadform(a + b).value - ii_quadform(a - b).value);
  EXPECT_NEAR(ab, ba, 1e-15);
  EXPECT_NEAR(ab, pol, 1e-13);
  EXPECT_NEAR(ii_bilinear(a, a).value, ii_quadform(a).value, 1e-15);
}

TEST(SecondVariation, LieDirectionsAreNull) {
  std::vector<SymTensorField> dirs = {
      lie_derivative_round(gaussian_vector({0.3, -0.7, 0.5}, {0.1, 0.2, -0.3}, 0.8)),
      lie_derivative_round(gaussian_vector({1.0, 0.2, 0.0}, {-0.4, 0.0, 0.2}, 1.1)),
  };
  // smooth vector fields on the sphere, including non-conformal ones
  Mat4 M = random_symmetric4(3);
  dirs.push_back(theta_of(lie_tensor({0.2, -0.1, 0.4, 0.3}, M)));
  for (const auto& theta : dirs) {
    double scale = ii_magnitude(theta).value;
    EXPECT_GT(scale, 1e-5);
    EXPECT_LE(std::abs(ii_quadform(theta).value), 1e-6 * scale) << theta.info().label;
  }
}

TEST(SecondVariation, ConformalSphereDirectionIsNull) {
  AmbientQuadratic q;
  q.c = 0.3;
  q.b = {0.5, -0.2, 0.1, 0.7};
  q.A[0][3] = q.A[3][0] = 0.4;
  auto theta = theta_of(ambient_conformal_tensor(q));
  double scale = ii_magnitude(theta).value;
  EXPECT_LE(std::abs(ii_quadform(theta).value), 1e-6 * scale);
}

TEST(SecondVariation, NonpositiveOnBumps) {
  for (auto theta : {bump_theta(), second_bump_theta(), bump_theta() + second_bump_theta()}) {
    auto e = ii_quadform(theta);
    EXPECT_LT(e.value, 0.0);
    EXPECT_LE(e.value, 1e-8);
  }
}

TEST(Norms, GaussianL2AndH2) {
  Sym3<double> A;
  A(0, 0) = 1;
  auto theta = gaussian_tensor(A, {0.3, -0.2, 0.1}, 1.0);
  const double base = std::pow(M_PI / 2, 1.5);
  EXPECT_NEAR(flat_l2_norm2(theta).value, base, 1e-10);
  EXPECT_NEAR(flat_h2_norm2(theta).value, 22 * base, 1e-9);
}

TEST(SecondVariation, RejectsSlowDecay) {
  FieldInfo info;
  info.decay = 1.0;
  auto grow = make_sym([](const auto& x) { return x[0] * Sym3<scalar_of_t<decltype(x)>>::identity(); }, info);
  EXPECT_THROW(ii_quadform(grow), std::domain_error);
}

TEST(FirstVariation, CompactAndConstant) {
  auto r = first_variation_pole(bump_theta());
  EXPECT_LE(std::abs(r.value), 1e-150);
  auto c = first_variation_pole(identity_tensor());
  EXPECT_EQ(c.value, 0.0);
  auto conf = first_variation_pole(pullback_theta(conformal_direction(gaussian({0.2, 0, 0}, 1.0))));
  EXPECT_LE(std::abs(conf.value), 1e-12);
}

TEST(FirstVariation, SmoothTensorsVanishInTheLimit) {
  auto pts = norm_sample_points();
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    auto theta = theta_of(ambient_form_tensor(random_symmetric4(seed)));
    auto r = first_variation_pole(theta);
    double c4 = ck_norm<4>(theta, pts);
    EXPECT_GT(std::abs(r.samples.front()), 1e-6);
    EXPECT_LE(std::abs(r.samples.back()), std::abs(r.samples.front()));
    EXPECT_LE(std::abs(r.value), 1e-6 * c4);
    // volume form of the same limit, sample by sample (divergence theorem)
    auto v = nu_first_variation(theta);
    for (std::size_t i = 0; i < r.radii.size(); ++i)
      EXPECT_NEAR(v.samples[i], -16 * r.samples[i], 1e-9 * std::abs(r.samples[i]) + 1e-14);
    EXPECT_LE(std::abs(v.value), 1e-6 * c4);
  }
}

TEST(FirstVariation, GrowingFluxIsRejected) {
  FieldInfo info;
  info.decay = 0.0;
  // F is homogeneous of degree 1 at infinity, so the flux grows like R
  auto bad = make_sym(
      [](const auto& x) {
        using T = scalar_of_t<decltype(x)>;
        using std::sqrt;
        Sym3<T> t;
        t(0, 0) = x[1] * x[1] * x[1] * x[1] / sqrt(1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        return t;
      },
      info);
  EXPECT_THROW(first_variation_pole(bad), std::runtime_error);
  EXPECT_THROW(first_variation_pole(bump_theta(), {10.0}), std::invalid_argument);
}

TEST(FirstVariation, Extrapolation) {
  std::vector<double> R{20, 40, 80, 160, 320}, v;
  for (double r : R) v.push_back(0.5 + 3 / r - 7 / (r * r) + 2 / (r * r * r));
  EXPECT_NEAR(extrapolate_inverse_powers(R, v), 0.5, 1e-12);
}

TEST(OffDiagonal, ZeroTensor) {
  auto h = from_theta(zero_tensor());
  auto t = i_offdiagonal(h, {0.3, 0.1, -0.2});
  EXPECT_EQ(t.total, 0.0);
}

TEST(OffDiagonal, ConformalDirectionsFollowGreenLaw) {
  // h = f g gives G_t(N,q) = (1+tf(N))^(1/4) (1+tf(q))^(1/4) G(N,q)
  auto f = gaussian({0.2, -0.1, 0.3}, 0.9, 1.0);
  auto h = sphere_tensor_from_north(conformal_direction(f));
  auto k = off_diagonal_constants(h);
  for (Vec3d y : {Vec3d{0.1, 0.2, -0.3}, Vec3d{1.5, -0.5, 0.2}}) {
    double expect = 0.25 * f(y) * green_pole(y);
    auto t = i_offdiagonal(h, y, k);
    EXPECT_NEAR(t.total, expect, 1e-8 * std::abs(expect)) << y[0];
  }
  AmbientQuadratic q;
  q.c = 0.3;
  q.b = {0.5, -0.2, 0.1, 0.7};
  auto hs = ambient_conformal_tensor(q);
  auto ks = off_diagonal_constants(hs);
  const double fN = q(Vec4{0, 0, 0, 1});
  for (Vec3d y : {Vec3d{0.1, 0.2, -0.3}, Vec3d{1.5, -0.5, 0.2}}) {
    double fq = ambient_scalar(q)(y);
    double expect = 0.25 * (fN + fq) * green_pole(y);
    auto t = i_offdiagonal(hs, y, ks);
    EXPECT_NEAR(t.total, expect, 1e-7 * std::abs(expect)) << y[0];
  }
}

TEST(OffDiagonal, LieDirectionsFollowTheFlow) {
  // X vanishing near N: I = X(q) . grad_q G(N, q)
  auto X = gaussian_vector({0.3, -0.7, 0.5}, {0.1, 0.2, -0.3}, 0.8);
  auto h = sphere_tensor_from_north(pushforward_theta(lie_derivative_round(X)));
  auto k = off_diagonal_constants(h);
  for (Vec3d y : {Vec3d{0.2, 0.0, -0.1}, Vec3d{-0.6, 0.4, 0.3}}) {
    double s2 = norm2(y) + 1;
    Vec3d grad = (1.0 / (4 * M_PI * s2 * std::sqrt(s2))) * y;
    double expect = dot(X(y), grad);
    auto t = i_offdiagonal(h, y, k);
    EXPECT_NEAR(t.total, expect, 1e-8 * std::abs(expect) + 1e-12);
  }
}

TEST(OffDiagonal, SingularAndSmoothRoutesAgreeOffSupport) {
  auto theta = gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0, 0, 0}, 0.5);
  Vec3d y{3.0, 0.5, -0.4};
  double a = off_diagonal_kernel(theta, y).value;
  double b = off_diagonal_kernel_grid(theta, y, 3.0, 48);
  EXPECT_GT(std::abs(a), 1e-6);
  EXPECT_NEAR(a, b, 1e-6 * std::abs(a));
}

TEST(OffDiagonal, SingularRouteNearSupportIsSecondOrder) {
  auto theta = gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0, 0, 0}, 0.8);
  Vec3d y{0.31, -0.17, 0.05};
  double a = off_diagonal_kernel(theta, y).value;
  double e1 = std::abs(off_diagonal_kernel_grid(theta, y, 4.0, 32) - a);
  double e2 = std::abs(off_diagonal_kernel_grid(theta, y, 4.0, 64) - a);
  EXPECT_LT(e2, 0.25 * e1);
  EXPECT_LT(e2, 5e-2 * std::abs(a));
}

TEST(OffDiagonal, VanishesTowardThePole) {
  auto h = ambient_form_tensor(random_symmetric4(11));
  auto k = off_diagonal_constants(h);
  Vec3d dir{0.48, -0.6, 0.64};
  double prev = kInf;
  for (double r : {10.0, 100.0, 1000.0}) {
    double v = std::abs(i_offdiagonal(h, r * dir, k).total);
    EXPECT_LT(v, prev);
    EXPECT_LT(v * r, 10.0);
    prev = v;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(GaugeSolve, Examples) {
  auto A0 = gauge_linear_solve(LinearFormMatrix{});
  for (const auto& row : A0.a)
    for (double v : row) EXPECT_EQ(v, 0.0);
  LinearFormMatrix H;
  for (int i = 0; i < 3; ++i) H.at(i, i, 0) = 1.0;
  auto A = gauge_linear_solve(H);
  EXPECT_LE(max_abs_difference(symmetric_gradient(A), H), 1e-14);
  // substitution at a point: d_i A_j + d_j A_i = delta_ij x_1
  Vec3d x{0.3, -0.7, 1.1};
  auto J = A(seed<1>(x));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double a = J[j].c[1 + i] + J[i].c[1 + j];
      EXPECT_NEAR(a, i == j ? x[0] : 0.0, 1e-14);
    }
}

TEST(GaugeSolve, RandomResiduals) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1, 1);
  double worst = 0;
  for (int n = 0; n < 1000; ++n) {
    LinearFormMatrix H;
    for (auto& r : H.c)
      for (auto& v : r) v = U(rng);
    worst = std::max(worst, max_abs_difference(symmetric_gradient(gauge_linear_solve(H)), H));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(GaugeNormalize, AlreadyFlatAtPole) {
  auto s = gauge_normalize(from_theta(bump_theta()));
  EXPECT_EQ(s.residual_jet, 0.0);
  for (const auto& row : s.alpha1)
    for (double v : row) EXPECT_EQ(v, 0.0);
  auto X = s.X({0.3, 0.2, 0.1});
  EXPECT_EQ(X[0], 0.0);
}

TEST(GaugeNormalize, MetricItself) {
  auto s = gauge_normalize(ambient_form_tensor(identity4()));
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(s.alpha1[i][k], i == k ? 2.0 : 0.0, 1e-14);
  EXPECT_LE(s.residual_jet, 1e-10);
}

TEST(GaugeNormalize, SmoothTensorsDecayAfterGauging) {
  std::vector<SphereTensor> hs = {ambient_form_tensor(random_symmetric4(21)), ambient_form_tensor(random_symmetric4(22))};
  AmbientQuadratic q;
  q.c = -0.2;
  q.b = {0.1, 0.3, -0.4, 0.6};
  hs.push_back(ambient_conformal_tensor(q));
  for (const auto& h : hs) {
    auto s = gauge_normalize(h);
    EXPECT_LE(s.residual_jet, 1e-10) << h.label;
    auto audit = decay_audit(s.theta, -2.0);
    EXPECT_TRUE(audit.pass) << h.label << " " << audit.reason;
    // the ungauged theta is only bounded
    EXPECT_FALSE(decay_audit(theta_of(h), -2.0).pass);
  }
}

TEST(GaugeNormalize, SecondVariationIsGaugeInvariant) {
  auto h = ambient_form_tensor(random_symmetric4(23));
  auto s = gauge_normalize(h);
  SpaceQuadrature q;
  q.n_r = 24;
  q.n_theta = 24;
  q.breaks = s.cutoff_breaks();
  auto raw = ii_quadform(theta_of(h));
  auto gauged = ii_quadform(s.theta, q);
  double scale = ii_magnitude(s.theta, q).value;
  EXPECT_LE(gauged.value, 1e-8);
  EXPECT_NEAR(raw.value, gauged.value, 1e-6 * scale);
  std::vector<SymTensorField> gauge_dirs = {
      lie_derivative_round(gaussian_vector({0.3, -0.7, 0.5}, {0.1, 0.2, -0.3}, 0.8)),
      pure_trace(gaussian({0.1, -0.2, 0.3}, 0.9)),
  };
  for (const auto& kappa : gauge_dirs) {
    double norms = std::sqrt(scale * ii_magnitude(kappa).value);
    EXPECT_LE(std::abs(ii_bilinear(s.theta, kappa, q).value), 1e-6 * norms) << kappa.info().label;
  }
}

TEST(TransverseTraceless, CottonYorkSatisfiesConditions) {
  auto C = cotton_york(gaussian_tensor({{0.4, 0.7, -0.2, 0.1, 0.5, -0.3}}, {0.1, 0, 0.2}, 0.9));
  auto kappa = scale(tau_power_field(6.0), C);
  auto pts = norm_sample_points();
  pts.resize(40);
  EXPECT_LE(tt_condition_defect(kappa, pts), 1e-12);
  EXPECT_GT(ck_norm<1>(kappa, pts), 1e-2);
  EXPECT_GT(tt_condition_defect(scale(tau_power_field(6.0), bump_theta()), pts), 1e-3);
}

TEST(TransverseTraceless, GaugeFormThetaIsOrthogonal) {
  auto C = cotton_york(gaussian_tensor({{0.4, 0.7, -0.2, 0.1, 0.5, -0.3}}, {0.1, 0, 0.2}, 0.9));
  auto kappa = scale(tau_power_field(6.0), C);
  auto pts = norm_sample_points();
  pts.resize(40);
  auto quad = box_trapezoid({0, 0, 0}, 6.0, 48);
  EXPECT_EQ(tt_orthogonality_residual(bump_theta(), scale(tau_power_field(6.0), zero_tensor()), quad, pts), 0.0);
  // theta = f delta + d_i v_j + d_j v_i, the real-space form of alpha delta + beta xi + xi beta
  auto f = gaussian({0.2, 0.1, 0}, 0.8);
  auto v = gaussian_vector({0.5, -0.3, 0.2}, {-0.1, 0.3, 0.1}, 0.9);
  FieldInfo info;
  info.decay = -kInf;
  auto theta = make_sym(
      [f, v](const auto& x) {
        return with_derivatives<1, SymKind>(x, [&](const auto& y) {
          auto vv = v(y);
          auto ff = f(y);
          using J = std::decay_t<decltype(ff)>;
          Sym3<J> t;
          for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) t(i, j) = d(vv[j], i) + d(vv[i], j) + (i == j ? ff : J(0.0));
          return t;
        });
      },
      info);
  double r = tt_orthogonality_residual(theta, kappa, quad, pts);
  double size = tt_orthogonality_residual(bump_theta(), kappa, quad, pts);
  EXPECT_GT(std::abs(size), 1e-3);
  EXPECT_LE(std::abs(r), 1e-6 * std::abs(size));
  EXPECT_THROW(tt_orthogonality_residual(theta, scale(tau_power_field(6.0), bump_theta()), quad, pts),
               std::invalid_argument);
}
