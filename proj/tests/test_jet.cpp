#include <gtest/gtest.h>

#include <cmath>

#include "s3p/jet.hpp"

using namespace s3p;

TEST(Jet, TableSizes) {
  EXPECT_EQ(Jet<2>::size, 10);
  EXPECT_EQ(Jet<4>::size, 35);
  EXPECT_EQ(Jet<6>::size, 84);
  EXPECT_EQ(detail::tables<4>.P, 210);
}

TEST(Jet, PolynomialPartials) {
  auto x = seed<4>({0.3, -0.7, 1.1});
  auto f = x[0] * x[0] * x[1];  // x1^2 x2
  EXPECT_NEAR(f.partial(2, 1, 0), 2.0, 1e-15);
  EXPECT_NEAR(f.partial(1, 0, 0), 2 * 0.3 * -0.7, 1e-15);
  EXPECT_NEAR(f.partial(0, 1, 0), 0.09, 1e-15);
  EXPECT_NEAR(f.partial(1, 1, 0), 0.6, 1e-15);
  EXPECT_EQ(f.partial(0, 0, 1), 0.0);
}

TEST(Jet, ExpOfProductMatchesClosedForm) {
  // f = exp(x y), d^2f/dxdy = exp(xy)(1 + xy)
  const double a = 0.4, b = -0.9;
  auto x = seed<4>({a, b, 0.0});
  auto f = exp(x[0] * x[1]);
  const double e = std::exp(a * b);
  EXPECT_NEAR(f.partial(1, 1, 0), e * (1 + a * b), 1e-13);
  EXPECT_NEAR(f.partial(2, 0, 0), e * b * b, 1e-13);
  // d^4/dx^2dy^2 exp(xy) = e (2 + 4xy + x^2y^2) ... verify by direct expansion
  double xy = a * b;
  EXPECT_NEAR(f.partial(2, 2, 0), e * (2 + 4 * xy + xy * xy), 1e-12);
}

TEST(Jet, ElementaryFunctionsOneVariable) {
  const double t = 0.8;
  auto x = seed<6>({t, 0, 0});
  auto s = sin(x[0]);
  auto c = cos(x[0]);
  auto l = log(x[0]);
  auto r = sqrt(x[0]);
  auto q = recip(x[0]);
  auto p = pow(x[0], -1.5);
  auto at = atan(x[0]);
  EXPECT_NEAR(s.partial(3, 0, 0), -std::cos(t), 1e-13);
  EXPECT_NEAR(c.partial(5, 0, 0), -std::sin(t), 1e-12);
  EXPECT_NEAR(l.partial(4, 0, 0), -6.0 / std::pow(t, 4), 1e-11);
  EXPECT_NEAR(r.partial(2, 0, 0), -0.25 * std::pow(t, -1.5), 1e-13);
  EXPECT_NEAR(q.partial(3, 0, 0), -6.0 / std::pow(t, 4), 1e-11);
  EXPECT_NEAR(p.partial(2, 0, 0), 1.5 * 2.5 * std::pow(t, -3.5), 1e-12);
  // atan'' = -2t/(1+t^2)^2
  EXPECT_NEAR(at.partial(2, 0, 0), -2 * t / std::pow(1 + t * t, 2), 1e-13);
}

TEST(Jet, DivisionIsInverseOfProduct) {
  auto x = seed<4>({0.5, 0.2, -0.3});
  auto a = 1.0 + x[0] * x[1] + x[2] * x[2] * x[0];
  auto b = 2.0 + sin(x[1] + x[2]);
  auto q = (a / b) * b;
  for (int i = 0; i < Jet<4>::size; ++i) EXPECT_NEAR(q.c[i], a.c[i], 1e-13);
}

TEST(Jet, DerivativeLowersOrder) {
  auto x = seed<4>({0.1, 0.2, 0.3});
  auto f = exp(x[0] + 2.0 * x[1] - x[2]);
  auto g = d(f, 1);
  // d/dy f = 2 f
  EXPECT_NEAR(g.partial(1, 1, 1), 2 * f.partial(1, 1, 1), 1e-12);
  EXPECT_EQ(g.c[Jet<4>::index(4, 0, 0)], 0.0);
}

TEST(Jet, CompositionMatchesDirectEvaluation) {
  // f(u) with u = (x^2, x y, sin z) must equal direct substitution
  const std::array<double, 3> p{0.3, -0.4, 0.6};
  auto x = seed<4>(p);
  Point<4> u{x[0] * x[0], x[0] * x[1], sin(x[2])};
  auto ub = base_of<4>(u);
  auto y = seed<4>(ub);
  auto fy = exp(y[0]) * y[1] + y[2] * y[2] * y[0];
  auto composed = compose(fy, u);
  auto direct = exp(u[0]) * u[1] + u[2] * u[2] * u[0];
  for (int i = 0; i < Jet<4>::size; ++i) EXPECT_NEAR(composed.c[i], direct.c[i], 1e-13);
  EXPECT_TRUE(is_seed<4>(x));
  EXPECT_FALSE(is_seed<4>(u));
}
