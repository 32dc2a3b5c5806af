#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "s3p/geometry.hpp"
#include "s3p/grid.hpp"

using namespace s3p;

namespace {

std::vector<Vec3d> random_points(int n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-scale, scale);
  std::vector<Vec3d> r;
  for (int i = 0; i < n; ++i) r.push_back({U(rng), U(rng), U(rng)});
  return r;
}

MetricField bumpy_metric() {
  auto h = gaussian_tensor({{1.0, 0.3, -0.2, 0.6, 0.1, 0.8}}, {0.2, -0.1, 0.3}, 1.0) +
           gaussian_tensor({{0.2, -0.4, 0.1, 0.5, 0.3, -0.1}}, {-0.5, 0.4, 0.0}, 0.7);
  return perturbed_metric(flat_metric(), h, 0.3);
}

ScalarField degree_one_harmonic() {
  AmbientQuadratic q;
  q.b = {0.3, -0.5, 0.2, 0.7};
  return ambient_scalar(q);
}

}  // namespace

TEST(Curvature, FlatVanishes) {
  auto p = curvature_pipeline(flat_metric(), {0.3, 0.1, -2});
  for (double v : p.christoffel.v) EXPECT_EQ(v, 0.0);
  for (double v : p.ricci.v) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.scalar, 0.0);
  EXPECT_EQ(p.q, 0.0);
}

TEST(Curvature, RoundConstantsAtRandomPoints) {
  auto g = round_metric();
  auto pts = random_points(100, 11, 3.0);
  pts.push_back({0, 0, 0});
  pts.push_back({1, 1, 1});
  for (const auto& x : pts) {
    auto p = curvature_pipeline(g, x);
    EXPECT_NEAR(p.scalar, 6.0, 1e-10);
    EXPECT_NEAR(p.ricci_norm2, 12.0, 1e-9);
    EXPECT_NEAR(p.q, 15.0 / 8.0, 1e-9);
    auto gx = g.g(x);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(p.ricci.v[i], 2 * gx.v[i], 1e-11);
  }
}

TEST(Curvature, SymmetriesOfRiemann) {
  auto g = bumpy_metric();
  auto p = curvature_pipeline(g, {0.1, 0.2, -0.3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(p.christoffel(k, i, j), p.christoffel(k, j, i), 1e-15);
        for (int l = 0; l < 3; ++l) {
          EXPECT_NEAR(p.riemann(i, j, k, l), -p.riemann(j, i, k, l), 1e-13);
          EXPECT_NEAR(p.riemann(i, j, k, l), -p.riemann(i, j, l, k), 1e-13);
          EXPECT_NEAR(p.riemann(i, j, k, l), p.riemann(k, l, i, j), 1e-13);
          EXPECT_NEAR(p.riemann(i, j, k, l) + p.riemann(j, k, i, l) + p.riemann(k, i, j, l), 0.0, 1e-13);
        }
      }
}

TEST(Curvature, ContractedBianchi) {
  auto g = bumpy_metric();
  for (const auto& x : random_points(10, 3, 1.0)) EXPECT_LT(bianchi_residual(g, x), 1e-12);
  EXPECT_LT(bianchi_residual(round_metric(), {0.4, 0.3, 0.1}), 1e-12);
}

TEST(Curvature, RejectsIndefiniteMetric) {
  auto g = perturbed_metric(flat_metric(), gaussian_tensor({{-1, 0, 0, 0, 0, 0}}, {0, 0, 0}, 1.0), 2.0);
  EXPECT_THROW(curvature_pipeline(g, {0, 0, 0}), std::domain_error);
  MetricField weak{grid_tensor(sample_tensor(identity_tensor(), cube_grid(2, 16)), 0.0), "grid"};
  weak.g = weak.g.with_info([&] {
    auto i = weak.g.info();
    i.max_order = 2;
    return i;
  }());
  EXPECT_THROW(curvature_pipeline(weak, {0, 0, 0}), std::domain_error);
}

TEST(LaplaceBeltrami, Examples) {
  FieldInfo info;
  info.decay = 2;
  auto r2 = make_scalar([](const auto& x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }, info);
  EXPECT_NEAR(laplace_beltrami(flat_metric(), r2, {0.3, 1, -1}), 6.0, 1e-13);
  auto phi = degree_one_harmonic();
  for (const auto& x : random_points(5, 5, 2.0))
    EXPECT_NEAR(laplace_beltrami(round_metric(), phi, x), -3 * phi(x), 1e-12);
}

TEST(Paneitz, RoundSphereSpectrum) {
  auto g = round_metric();
  auto one = constant_scalar(1.0);
  auto phi = degree_one_harmonic();
  for (const auto& x : random_points(5, 9, 2.0)) {
    EXPECT_NEAR(paneitz_apply_exact(g, one, x), -15.0 / 16.0, 1e-10);
    EXPECT_NEAR(paneitz_apply_exact(g, phi, x), 105.0 / 16.0 * phi(x), 1e-10);
  }
}

TEST(Paneitz, FlatGaussianIsBilaplacian) {
  // Delta^2 exp(-r^2) = (16 r^4 - 80 r^2 + 60) exp(-r^2)
  auto f = gaussian({0, 0, 0}, 1.0);
  Vec3d x{0.3, -0.4, 0.5};
  double r2 = norm2(x);
  EXPECT_NEAR(paneitz_apply_exact(flat_metric(), f, x), (16 * r2 * r2 - 80 * r2 + 60) * std::exp(-r2), 1e-11);
}

TEST(Paneitz, ConformalCovariance) {
  auto phi = poly_gaussian({{1.0, 0, 0, 0}, {0.5, 1, 0, 1}}, {0.1, 0.2, 0}, 1.2);
  auto pts = random_points(6, 21, 1.5);
  EXPECT_EQ(conformal_covariance_residual(flat_metric(), constant_scalar(1.0), phi, pts), 0.0);
  EXPECT_LT(conformal_covariance_residual(flat_metric(), tau_field(), phi, pts), 1e-10);
  auto rho = constant_scalar(1.0) + 0.1 * gaussian({0.2, 0, -0.1}, 0.8);
  EXPECT_LT(conformal_covariance_residual(bumpy_metric(), rho, phi, pts), 1e-10);
  EXPECT_THROW(conformal_covariance_residual(flat_metric(), -1.0 * tau_field(), phi, pts), std::invalid_argument);
}

TEST(Curvature, RoundConstantsRuntime) {
  auto t0 = std::chrono::steady_clock::now();
  auto g = round_metric();
  for (const auto& x : random_points(100, 1, 3.0)) curvature_pipeline(g, x);
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(s, 10.0);
}
