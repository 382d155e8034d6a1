#include "gpw/manifold.hpp"

#include <gtest/gtest.h>

#include <vector>

#include "gpw/tensor.hpp"

using namespace gpw;

namespace {

Expr zvar(const CoordinateChart& c, int i) { return Expr::variable(c.z(i)); }

ManifoldConfig make_config(int p, const char* which) {
  CoordinateChart c(p);
  const std::string w = which;
  if (w == "zero") return ManifoldConfig(p, Expr::constant(0));
  if (w == "h1") return ManifoldConfig(p, zvar(c, 1) * Expr::pow(zvar(c, 0), 2));
  if (w == "exp") return ManifoldConfig(p, Expr::exp(zvar(c, 0)));
  if (w == "ladder_exp") {
    Expr f = Expr::exp(zvar(c, 0));
    for (int m = 1; m <= p; ++m) f += zvar(c, m) * Expr::pow(zvar(c, 0), m + 1);
    return ManifoldConfig(p, f);
  }
  throw Error("unknown test config");
}

std::vector<Rational> zero_point(const ManifoldConfig& cfg) {
  return std::vector<Rational>(static_cast<std::size_t>(cfg.dim()), Rational(0));
}

TEST(Config, ValidatesVariables) {
  CoordinateChart c(1);
  EXPECT_THROW(ManifoldConfig(1, Expr::variable(c.zt(0))), Error);
  EXPECT_THROW(ManifoldConfig(1, Expr::variable(c.x())), Error);
  EXPECT_THROW(ManifoldConfig(1, Expr::exp(Expr::variable(c.z(1)))), Error);
  EXPECT_NO_THROW(ManifoldConfig(1, Expr::exp(Expr::constant(2) * Expr::variable(c.z(0)))));
  EXPECT_EQ(make_config(2, "h1").dim(), 14);
  EXPECT_EQ(make_config(1, "h1").signature(), (std::pair<int, int>{5, 5}));
}

TEST(Metric, SpecifiedNonzeros) {
  // p=1, f=e^{z0}, point z0=0, rest 0: g(dx,dx) = -2.
  auto cfg = make_config(1, "exp");
  const CoordinateChart& c = cfg.chart();
  std::vector<double> pt(10, 0.0);
  auto g = metric_at<double>(cfg, pt);
  EXPECT_DOUBLE_EQ(g.get({c.x(), c.x()}), -2.0);
  EXPECT_DOUBLE_EQ(g.get({c.x(), c.xs()}), 1.0);
  EXPECT_DOUBLE_EQ(g.get({c.z(0), c.zs(0)}), 1.0);
  EXPECT_DOUBLE_EQ(g.get({c.zt(1), c.zts(1)}), 1.0);
  EXPECT_DOUBLE_EQ(g.get({c.z(0), c.zt(0)}), 0.0);

  // p=1, f=0, z0=1, zt0=2: g(dx,dx) = -4.
  auto cfg0 = make_config(1, "zero");
  auto pt2 = zero_point(cfg0);
  pt2[static_cast<std::size_t>(c.z(0))] = 1;
  pt2[static_cast<std::size_t>(c.zt(0))] = 2;
  auto g2 = metric_at<Rational>(cfg0, pt2);
  EXPECT_EQ(g2.get({c.x(), c.x()}), Rational(-4));
}

TEST(Metric, DeterminantIsUnit) {
  for (int p : {1, 2}) {
    auto cfg = make_config(p, "h1");
    Rng rng(31);
    const auto pt = random_rational_point(cfg.chart(), rng);
    const auto g = metric_at<Rational>(cfg, pt);
    Matrix<Rational> m(cfg.dim(), cfg.dim());
    for (int a = 0; a < cfg.dim(); ++a)
      for (int b = 0; b < cfg.dim(); ++b) m(a, b) = g.get({a, b});
    const Rational d = m.det();
    EXPECT_TRUE(d == 1 || d == -1) << to_string(d);
  }
}

// Inertia count via symmetric Gaussian congruence (test-local).
std::pair<int, int> inertia(Matrix<double> m) {
  const int n = m.rows();
  int pos = 0, neg = 0;
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  // Jacobi eigenvalue iteration on the symmetric matrix.
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
    if (off < 1e-20) break;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (std::abs(m(i, j)) < 1e-14) continue;
        const double theta = 0.5 * std::atan2(2 * m(i, j), m(j, j) - m(i, i));
        const double cs = std::cos(theta), sn = std::sin(theta);
        for (int k = 0; k < n; ++k) {
          const double a = m(i, k), b = m(j, k);
          m(i, k) = cs * a - sn * b;
          m(j, k) = sn * a + cs * b;
        }
        for (int k = 0; k < n; ++k) {
          const double a = m(k, i), b = m(k, j);
          m(k, i) = cs * a - sn * b;
          m(k, j) = sn * a + cs * b;
        }
      }
  }
  for (int i = 0; i < n; ++i) (m(i, i) > 0 ? pos : neg)++;
  return {neg, pos};
}

TEST(Metric, NeutralSignature) {
  for (int p : {1, 2}) {
    auto cfg = make_config(p, "ladder_exp");
    Rng rng(37);
    for (int trial = 0; trial < 3; ++trial) {
      const auto pt = random_point(cfg.chart(), rng);
      const auto g = metric_at<double>(cfg, pt);
      Matrix<double> m(cfg.dim(), cfg.dim());
      for (int a = 0; a < cfg.dim(); ++a)
        for (int b = 0; b < cfg.dim(); ++b) m(a, b) = g.get({a, b});
      EXPECT_EQ(inertia(m), cfg.signature());
    }
  }
}

TEST(MetricInverse, ClosedFormAndProduct) {
  auto cfg = make_config(1, "ladder_exp");
  const CoordinateChart& c = cfg.chart();
  Rng rng(41);
  const auto pt = random_point(cfg.chart(), rng);
  const auto g = metric_at<double>(cfg, pt);
  const auto gi = metric_inverse_at<double>(cfg, pt);
  EXPECT_DOUBLE_EQ(gi.get({c.x(), c.xs()}), 1.0);
  EXPECT_DOUBLE_EQ(gi.get({c.x(), c.x()}), 0.0);
  const double F = -0.5 * g.get({c.x(), c.x()});
  EXPECT_NEAR(gi.get({c.xs(), c.xs()}), 2 * F, 1e-14);
  // g * g^{-1} = identity
  for (int a = 0; a < cfg.dim(); ++a)
    for (int b = 0; b < cfg.dim(); ++b) {
      double s = 0;
      for (int e = 0; e < cfg.dim(); ++e) s += g.get({a, e}) * gi.get({e, b});
      EXPECT_NEAR(s, a == b ? 1.0 : 0.0, 1e-13) << a << "," << b;
    }
}

TEST(Christoffel, ClosedFormValues) {
  auto cfg = make_config(1, "zero");
  const CoordinateChart& c = cfg.chart();
  auto pt = zero_point(cfg);
  pt[static_cast<std::size_t>(c.z(0))] = 1;
  pt[static_cast<std::size_t>(c.zt(0))] = 2;
  const auto gamma = christoffel_at<Rational>(cfg, pt);
  // nabla_{dx} dx = 2 d_{zs0} + 1 d_{zts0}
  EXPECT_EQ(gamma.get({c.zs(0), c.x(), c.x()}), Rational(2));
  EXPECT_EQ(gamma.get({c.zts(0), c.x(), c.x()}), Rational(1));
  EXPECT_EQ(gamma.get({c.xs(), c.x(), c.z(0)}), Rational(-2));
  EXPECT_EQ(gamma.get({c.xs(), c.z(0), c.x()}), Rational(-2));
  // No derivative in any dual direction, and dual directions are parallel.
  for (const auto& [idx, v] : gamma.expanded_entries()) {
    EXPECT_FALSE(c.is_dual(idx[1]));
    EXPECT_FALSE(c.is_dual(idx[2]));
  }
}

TEST(Christoffel, VanishesAtCriticalPoint) {
  // f = z1 z0^2 at the origin: d_{z0} F = 2 z1 z0 + zt0 = 0 there.
  auto cfg = make_config(1, "h1");
  const CoordinateChart& c = cfg.chart();
  const auto gamma = christoffel_at<Rational>(cfg, zero_point(cfg));
  EXPECT_EQ(gamma.get({c.xs(), c.x(), c.z(0)}), Rational(0));
  EXPECT_TRUE(gamma.empty());
}

TEST(Christoffel, ClosedMatchesGenericFormula) {
  for (int p : {1, 2}) {
    for (const char* which : {"zero", "h1", "ladder_exp"}) {
      auto cfg = make_config(p, which);
      const auto generic =
          christoffel_from_metric(cfg.metric_field(), cfg.metric_inverse_field());
      Rng rng(43);
      for (int trial = 0; trial < 5; ++trial) {
        if (cfg.rational_mode()) {
          const auto pt = random_rational_point(cfg.chart(), rng);
          EXPECT_TRUE(exact_equal(eval_field<Rational>(generic, pt),
                                  christoffel_at<Rational>(cfg, pt)));
        } else {
          const auto pt = random_point(cfg.chart(), rng);
          EXPECT_LE(sup_residual(eval_field<double>(generic, pt), christoffel_at<double>(cfg, pt)),
                    1e-12);
        }
      }
    }
  }
}

TEST(NablaR, CurvatureUnitEntries) {
  // R(dx, dz_i, dzt_i, dx) = 1 for all i and any f.
  for (const char* which : {"zero", "h1", "ladder_exp"}) {
    auto cfg = make_config(1, which);
    const CoordinateChart& c = cfg.chart();
    Rng rng(47);
    const auto pt = random_point(cfg.chart(), rng);
    const auto r = nabla_r_closed<double>(cfg, pt, 0);
    for (int i = 0; i <= 1; ++i)
      EXPECT_DOUBLE_EQ(r.get({c.x(), c.z(i), c.zt(i), c.x()}), 1.0) << which;
  }
}

TEST(NablaR, FirstDerivativeExample) {
  // f = z1 z0^2: nabla R(dx, dz0, dz1, dx; dz0) = 2.
  auto cfg = make_config(1, "h1");
  const CoordinateChart& c = cfg.chart();
  const auto r = nabla_r_closed<Rational>(cfg, zero_point(cfg), 1);
  EXPECT_EQ(r.get({c.x(), c.z(0), c.z(1), c.x(), c.z(0)}), Rational(2));
  EXPECT_EQ(r.get({c.x(), c.z(0), c.z(0), c.x(), c.z(1)}), Rational(2));
  // Any zt direction kills the entry for k >= 1.
  EXPECT_EQ(r.get({c.x(), c.zt(0), c.z(0), c.x(), c.z(0)}), Rational(0));
  EXPECT_EQ(r.get({c.x(), c.z(0), c.z(0), c.x(), c.zt(0)}), Rational(0));
}

TEST(NablaR, PsiChannelHighDerivative) {
  // f = psi(z0) only, k = p+1: the single surviving component is psi^{(p+3)}.
  const int p = 1;
  auto cfg = make_config(p, "exp");
  const CoordinateChart& c = cfg.chart();
  std::vector<double> pt(static_cast<std::size_t>(cfg.dim()), 0.0);
  pt[static_cast<std::size_t>(c.z(0))] = 0.3;
  const auto r = nabla_r_closed<double>(cfg, pt, p + 1);
  std::vector<int> idx{c.x(), c.z(0), c.z(0), c.x()};
  for (int j = 0; j < p + 1; ++j) idx.push_back(c.z(0));
  EXPECT_NEAR(r.get(idx), std::exp(0.3), 1e-14);
}

TEST(NablaR, SupportExcludesDualDirections) {
  auto cfg = make_config(1, "ladder_exp");
  Rng rng(53);
  const auto pt = random_point(cfg.chart(), rng);
  for (int k = 0; k <= 2; ++k) {
    const auto closed = nabla_r_closed<double>(cfg, pt, k);
    for (const auto& [idx, v] : closed.expanded_entries())
      for (int a : idx) EXPECT_FALSE(cfg.chart().is_dual(a));
    const auto oracle = nabla_r_oracle<double>(cfg, pt, k);
    for (const auto& [idx, v] : oracle.expanded_entries())
      for (int a : idx) EXPECT_FALSE(cfg.chart().is_dual(a)) << "k=" << k;
  }
}

TEST(NablaR, OracleMatchesClosedExactly) {
  // Exact rational agreement for polynomial f.
  auto cfg = make_config(1, "h1");
  Rng rng(59);
  for (int k = 0; k <= 2; ++k) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto pt = random_rational_point(cfg.chart(), rng);
      EXPECT_TRUE(exact_equal(nabla_r_closed<Rational>(cfg, pt, k),
                              nabla_r_oracle<Rational>(cfg, pt, k)))
          << "k=" << k << " trial=" << trial;
    }
  }
}

TEST(NablaR, FlatWhenQuadratic) {
  // f = 0: nabla R vanishes identically (symmetric space).
  auto cfg = make_config(1, "zero");
  EXPECT_TRUE(nabla_r_oracle_field(cfg, 1).empty());
  EXPECT_TRUE(cfg.nabla_r_field(1).empty());
  EXPECT_TRUE(cfg.f_at_most_quadratic());
  EXPECT_FALSE(make_config(1, "h1").f_at_most_quadratic());
}

TEST(NablaR, FlatnessDegreeOfPolynomialLadders) {
  // f = z1 z0^2: nabla^j R = 0 symbolically for j > 1.
  auto cfg = make_config(1, "h1");
  EXPECT_FALSE(cfg.nabla_r_field(1).empty());
  EXPECT_TRUE(cfg.nabla_r_field(2).empty());
  EXPECT_TRUE(cfg.nabla_r_field(3).empty());
}

TEST(NablaR, OracleRefusesBeyondCap) {
  auto cfg = make_config(1, "h1");
  EXPECT_THROW(nabla_r_oracle_field(cfg, 5), Error);
  EXPECT_NO_THROW(nabla_r_oracle_field(cfg, 2, 2));
  EXPECT_THROW(nabla_r_oracle_field(cfg, 3, 2), Error);
}

TEST(NablaR, CurvatureIdentitiesExhaustive) {
  // First Bianchi for R and the differential identity for nabla R, checked
  // over the full support at a random point (p = 1, dim 10).
  auto cfg = make_config(1, "ladder_exp");
  Rng rng(61);
  const auto pt = random_point(cfg.chart(), rng);
  const auto r = nabla_r_oracle<double>(cfg, pt, 0);
  const int n = cfg.dim();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          const double s = r.get({a, b, c, d}) + r.get({b, c, a, d}) + r.get({c, a, b, d});
          ASSERT_NEAR(s, 0.0, 1e-12);
          ASSERT_NEAR(r.get({a, b, c, d}), -r.get({b, a, c, d}), 1e-12);
          ASSERT_NEAR(r.get({a, b, c, d}), -r.get({a, b, d, c}), 1e-12);
          ASSERT_NEAR(r.get({a, b, c, d}), r.get({c, d, a, b}), 1e-12);
        }
  // Differential (second) identity: cyclic sum over the last three slots of
  // nabla R restricted to the support pattern.
  const auto nr = nabla_r_oracle<double>(cfg, pt, 1);
  for (const auto& [idx, v] : nr.expanded_entries()) {
    const int a = idx[0], b = idx[1], c = idx[2], d = idx[3], e = idx[4];
    const double cyc = nr.get({a, b, c, d, e}) + nr.get({a, b, d, e, c}) + nr.get({a, b, e, c, d});
    ASSERT_NEAR(cyc, 0.0, 1e-12);
  }
}

TEST(Oracle, MetricIsParallel) {
  // The covariant derivative of the metric field evaluates to zero; this
  // exercises the correction terms of the recursion (the metric has
  // dual-direction support, so they actually fire).
  for (const char* which : {"h1", "ladder_exp"}) {
    auto cfg = make_config(1, which);
    const auto gamma = christoffel_from_metric(cfg.metric_field(), cfg.metric_inverse_field());
    const auto dg = covariant_derivative_field(cfg.metric_field(), gamma);
    Rng rng(67);
    for (int trial = 0; trial < 5; ++trial) {
      const auto pt = random_point(cfg.chart(), rng);
      double worst = 0.0;
      for (const auto& [idx, e] : dg.raw_entries())
        worst = std::max(worst, std::abs(e.eval<double>(std::span<const double>(pt))));
      EXPECT_LE(worst, 1e-12) << which;
    }
  }
}

TEST(Oracle, FlatMetricFromCoordinateChange) {
  // g = [[1+u^2, u],[u, 1]] is the Euclidean metric pulled back through
  // (u, v) -> (u, v + u^2/2): nonzero Christoffel symbols, zero curvature.
  const Expr u = Expr::variable(0);
  SparseTensor<Expr> g(2, {Variance::Co, Variance::Co}, Sym::Pair);
  g.set({0, 0}, Expr::constant(1) + Expr::pow(u, 2));
  g.set({0, 1}, u);
  g.set({1, 1}, Expr::constant(1));
  SparseTensor<Expr> gi(2, {Variance::Contra, Variance::Contra}, Sym::Pair);
  gi.set({0, 0}, Expr::constant(1));
  gi.set({0, 1}, -u);
  gi.set({1, 1}, Expr::constant(1) + Expr::pow(u, 2));
  const auto gamma = christoffel_from_metric(g, gi);
  EXPECT_FALSE(gamma.empty());
  const auto r = curvature_from_christoffel(gamma, g);
  std::vector<Rational> pt{Rational(3, 2), Rational(-7, 3)};
  EXPECT_TRUE(eval_field<Rational>(r, pt).empty());
  const auto dg = covariant_derivative_field(g, gamma);
  EXPECT_TRUE(eval_field<Rational>(dg, pt).empty());
}

TEST(Oracle, CurvedPolynomialMetricHandValue) {
  // g = [[1, u],[u, 1+u^2]] has unit determinant and, by hand,
  // R_{0101} = 1 at every point.
  const Expr u = Expr::variable(0);
  SparseTensor<Expr> g(2, {Variance::Co, Variance::Co}, Sym::Pair);
  g.set({0, 0}, Expr::constant(1));
  g.set({0, 1}, u);
  g.set({1, 1}, Expr::constant(1) + Expr::pow(u, 2));
  SparseTensor<Expr> gi(2, {Variance::Contra, Variance::Contra}, Sym::Pair);
  gi.set({0, 0}, Expr::constant(1) + Expr::pow(u, 2));
  gi.set({0, 1}, -u);
  gi.set({1, 1}, Expr::constant(1));
  const auto gamma = christoffel_from_metric(g, gi);
  const auto r = curvature_from_christoffel(gamma, g);
  for (const Rational& x : {Rational(0), Rational(3, 2), Rational(-2)}) {
    std::vector<Rational> pt{x, Rational(5)};
    const auto rv = eval_field<Rational>(r, pt);
    EXPECT_EQ(rv.get({0, 1, 0, 1}), Rational(1));
    EXPECT_EQ(rv.get({0, 1, 1, 0}), Rational(-1));
    // Metric compatibility holds here as well.
    const auto dg = covariant_derivative_field(g, gamma);
    EXPECT_TRUE(eval_field<Rational>(dg, pt).empty());
  }
}

TEST(Oracle, QuadraticCrossTermsMatch) {
  // Synthetic constant Christoffel field: only the Gamma*Gamma terms of the
  // curvature formula survive; check one component by hand.
  //   Gamma^0_{11} = 1, Gamma^1_{01} = 1 (constants)
  //   R^d_{abc} = Gamma^d_{ae} Gamma^e_{bc} - Gamma^d_{be} Gamma^e_{ac}
  //   R^0_{01 1} = Gamma^0_{0e}Gamma^e_{11} - Gamma^0_{1e}Gamma^e_{01}
  //             = 0 - Gamma^0_{11}Gamma^1_{01} = -1
  SparseTensor<Expr> gamma(2, {Variance::Contra, Variance::Co, Variance::Co}, Sym::None);
  gamma.set({0, 1, 1}, Expr::constant(1));
  gamma.set({1, 0, 1}, Expr::constant(1));
  SparseTensor<Expr> flat_g(2, {Variance::Co, Variance::Co}, Sym::Pair);
  flat_g.set({0, 0}, Expr::constant(1));
  flat_g.set({1, 1}, Expr::constant(1));
  const auto r = curvature_from_christoffel(gamma, flat_g);
  std::vector<Rational> pt{Rational(0), Rational(0)};
  const auto rv = eval_field<Rational>(r, pt);
  // lowered through the identity metric: R_{011d} = R^d_{011}
  EXPECT_EQ(rv.get({0, 1, 1, 0}), Rational(-1));
}

}  // namespace
