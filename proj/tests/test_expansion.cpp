#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "s3p/catalog.hpp"
#include "s3p/expansion.hpp"
#include "s3p/fields.hpp"

using namespace s3p;

namespace {

std::vector<Vec3d> random_points(int n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-scale, scale);
  std::vector<Vec3d> r;
  for (int i = 0; i < n; ++i) r.push_back({U(rng), U(rng), U(rng)});
  return r;
}

SymTensorField bump_h() { return gaussian_tensor({{0.8, -0.5, 0.3, -0.6, 0.2, 0.4}}, {0.2, -0.1, 0.3}, 1.0); }

SymTensorField two_bump_h() {
  return 0.5 * (gaussian_tensor({{0.2, 0.7, -0.4, 0.1, 0.5, -0.9}}, {-0.3, 0.4, 0.0}, 0.8) +
                gaussian_tensor({{-0.5, 0.1, 0.6, 0.9, -0.2, 0.3}}, {0.4, 0.1, -0.2}, 1.2));
}

SymTensorField conformal_h() { return conformal_direction(gaussian({0.1, -0.3, 0.2}, 0.9, 0.7)); }

MetricField bumpy_metric() {
  auto h = gaussian_tensor({{1.0, 0.3, -0.2, 0.6, 0.1, 0.8}}, {0.2, -0.1, 0.3}, 1.0);
  return perturbed_metric(flat_metric(), h, 0.3);
}

ScalarField test_phi() { return gaussian({0.1, 0.2, -0.1}, 0.9); }

}  // namespace

TEST(Expansion, MeasureExamples) {
  Vec3d x{0.3, -0.2, 0.5};
  auto zero = measure_expansion(round_metric(), 0.0 * bump_h(), x);
  EXPECT_EQ(zero[0], 1.0);
  EXPECT_EQ(zero[1], 0.0);
  EXPECT_EQ(zero[2], 0.0);
  auto same = measure_expansion(round_metric(), round_metric().g, x);
  EXPECT_NEAR(same[1], 1.5, 1e-13);
  EXPECT_NEAR(same[2], 0.375, 1e-13);
}

TEST(Expansion, MeasureMatchesDeterminantTaylor) {
  // sqrt det(1 + tA) for symmetric A: d/dt and d2/dt2 by central differences of the exact value
  auto h = bump_h();
  for (const auto& x : random_points(5, 3, 1.0)) {
    auto e = measure_expansion(flat_metric(), h, x);
    auto f = [&](double t) { return exact_quantity(Quantity::measure, flat_metric(), h, t, nullptr, x)[0]; };
    const double s = 1e-3;
    EXPECT_NEAR(e[1], (f(s) - f(-s)) / (2 * s), 1e-6);
    EXPECT_NEAR(e[2], (f(s) - 2 * f(0) + f(-s)) / (2 * s * s), 1e-5);
  }
}

TEST(Expansion, ZeroPerturbation) {
  auto h0 = 0.0 * bump_h();
  auto phi = test_phi();
  for (const auto& x : random_points(4, 5, 1.0)) {
    auto q = q_expansion(round_metric(), h0, x);
    EXPECT_NEAR(q[0], 15.0 / 8.0, 1e-10);
    EXPECT_EQ(q[1], 0.0);
    EXPECT_EQ(q[2], 0.0);
    EXPECT_EQ(p1_apply(round_metric(), h0, phi, x), 0.0);
    EXPECT_EQ(p1_sphere_apply(h0, phi, x), 0.0);
    EXPECT_EQ(p2_one(round_metric(), h0, x), 0.0);
  }
}

TEST(Expansion, FlatFirstOrderQ) {
  auto h = two_bump_h();
  for (const auto& x : random_points(6, 7, 1.0)) {
    auto hj = h.jet<4>(x);
    double expect = -0.25 * flat_laplacian(ddmlt_jet(hj)).c[0];
    EXPECT_NEAR(q_expansion(flat_metric(), h, x)[1], expect, 1e-11);
  }
}

TEST(Expansion, ConstantChannel) {
  auto one = constant_scalar(1.0);
  std::vector<MetricField> backgrounds = {flat_metric(), round_metric(), bumpy_metric()};
  for (const auto& g : backgrounds)
    for (const auto& h : {bump_h(), two_bump_h(), conformal_h()})
      for (const auto& x : random_points(3, 11, 0.8)) {
        auto q = q_expansion(g, h, x);
        double scale = 1 + std::abs(q[1]) + std::abs(q[2]);
        EXPECT_NEAR(p1_apply(g, h, one, x), -0.5 * q[1], 1e-11 * scale) << g.label;
        EXPECT_NEAR(p2_one(g, h, x), -0.5 * q[2], 1e-11 * scale) << g.label;
        auto p = paneitz_expansion(g, h, one, x);
        EXPECT_NEAR(p[2], -0.5 * q[2], 1e-11 * scale) << g.label;
      }
}

TEST(Expansion, SphereFormAgrees) {
  auto phi = test_phi();
  auto one = constant_scalar(1.0);
  for (const auto& h : {bump_h(), two_bump_h(), conformal_h()})
    for (const auto& x : random_points(4, 13, 1.0)) {
      double a = p1_apply(round_metric(), h, phi, x);
      EXPECT_NEAR(p1_sphere_apply(h, phi, x), a, 1e-10 * (1 + std::abs(a)));
      // phi = 1 keeps only the S' terms
      auto c = perturbation_context(round_metric(), h, x);
      Jet<kExpansionOrder> Sp = -2.0 * c.trh;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) Sp += c.h4(i, j, i, j) - c.h4(i, i, j, j);
      double expect = 0.125 * c.lap(Sp).c[0] - (5.0 / 16.0) * Sp.c[0];
      EXPECT_NEAR(p1_sphere_apply(h, one, x), expect, 1e-10 * (1 + std::abs(expect)));
    }
}

TEST(Expansion, ClosedFormMatchesComposition) {
  auto phi = test_phi();
  std::vector<MetricField> backgrounds = {flat_metric(), round_metric(), bumpy_metric()};
  for (const auto& g : backgrounds)
    for (const auto& h : {bump_h(), two_bump_h()})
      for (const auto& x : random_points(3, 17, 0.8)) {
        auto c = perturbation_context(g, h, x);
        auto s = expansion_detail::paneitz_series(c, phi.jet<kExpansionOrder>(x));
        double closed = p1_apply(g, h, phi, x);
        EXPECT_NEAR(s[1].c[0], closed, 1e-10 * (1 + std::abs(closed))) << g.label;
      }
}

TEST(Expansion, GroupsSumToOperator) {
  auto phi = test_phi();
  Vec3d x{0.2, 0.1, -0.4};
  auto groups = p1_group_values(round_metric(), bump_h(), phi, x);
  double s = 0;
  for (double v : groups) s += v;
  EXPECT_DOUBLE_EQ(s, p1_apply(round_metric(), bump_h(), phi, x));
}

TEST(Expansion, FdSlopes) {
  auto phi = test_phi();
  auto pts = random_points(5, 19, 0.8);
  std::vector<MetricField> backgrounds = {flat_metric(), round_metric()};
  for (const auto& g : backgrounds)
    for (const auto& h : {bump_h(), two_bump_h(), conformal_h()})
      for (auto q : all_quantities()) {
        auto r = fd_validate(q, g, h, &phi, pts);
        EXPECT_TRUE(r.pass) << g.label << " " << quantity_name(q) << " slope " << r.slope;
        EXPECT_GE(r.slope, 2.7);
        EXPECT_LE(r.slope, 3.3);
      }
}

TEST(Expansion, FdCsv) {
  auto phi = test_phi();
  auto r = fd_validate(Quantity::q, round_metric(), bump_h(), &phi, {{0.1, 0.2, 0.3}});
  std::ostringstream os;
  write_fd_csv(os, r);
  std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
  EXPECT_EQ(s.rfind("quantity,t,remainder,slope\n", 0), 0u);
}

TEST(Expansion, Errors) {
  auto phi = test_phi();
  Vec3d x{0, 0, 0};
  EXPECT_THROW(expand_quantity(Quantity::laplacian, round_metric(), bump_h(), nullptr, x), std::invalid_argument);
  EXPECT_THROW(exact_quantity(Quantity::paneitz, round_metric(), bump_h(), 0.1, nullptr, x), std::invalid_argument);
  FieldInfo info;
  info.max_order = 3;
  auto low = make_sym([](const auto& y) { return Sym3<std::decay_t<decltype(y[0])>>{}; }, info);
  EXPECT_THROW(q_expansion(round_metric(), low, x), std::domain_error);
  EXPECT_THROW(p1_apply(round_metric(), bump_h(), phi, x) + p1_apply(round_metric(), low, phi, x), std::domain_error);
}

TEST(Expansion, FlatSecondOrderIntegral) {
  auto theta = two_bump_h();
  auto quad = box_trapezoid({0, 0, 0}, 5.0, 36);
  Accumulator lhs, rhs;
  for (std::size_t n = 0; n < quad.size(); ++n) {
    const auto& x = quad.x[n];
    lhs.add(quad.w[n] * p2_one(flat_metric(), theta, x));
    auto tj = theta.jet<2>(x);
    auto M = lichnerowicz_jet(tj);
    double m2 = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m2 += sqr(M(i, j).c[0]);
    double a = 0, b = ddmlt_jet(tj).c[0];
    auto lt = flat_laplacian(trace(tj)).c[0];
    a = b + lt;  // theta_ijij
    rhs.add(quad.w[n] * (0.25 * m2 - (1.0 / 64.0) * (23 * a - 19 * lt) * b));
  }
  EXPECT_NEAR(lhs.value(), rhs.value(), 1e-8);
  EXPECT_GT(std::abs(rhs.value()), 1e-3);
}

TEST(Expansion, Covariance) {
  auto phi = test_phi();
  auto pts = random_points(6, 23, 0.8);
  double r1 = p1_covariance_residual(flat_metric(), bump_h(), tau_field(), phi, pts);
  EXPECT_LE(r1, 1e-9);
  auto rho = constant_scalar(1.0) + gaussian({0.2, 0.0, -0.1}, 0.8, 0.1);
  double r2 = p1_covariance_residual(round_metric(), two_bump_h(), rho, phi, pts);
  EXPECT_LE(r2, 1e-9);
  EXPECT_THROW(p1_covariance_residual(flat_metric(), bump_h(), -1.0 * tau_field(), phi, pts), std::invalid_argument);
}

TEST(Expansion, AdjointDefect) {
  auto quad = box_trapezoid({0, 0, 0}, 5.0, 40);
  auto phi = gaussian({0.1, 0.2, -0.1}, 0.9);
  auto psi = gaussian({-0.3, 0.0, 0.2}, 0.8);
  EXPECT_EQ(adjoint_defect_residual(flat_metric(), bump_h(), phi, phi, quad), 0.0);
  EXPECT_LE(adjoint_defect_residual(flat_metric(), pure_trace(gaussian({0, 0.1, 0}, 1.0)), phi, psi, quad), 1e-8);
  EXPECT_LE(adjoint_defect_residual(flat_metric(), bump_h(), phi, psi, quad), 1e-8);
}
