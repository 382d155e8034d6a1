#include "gpw/tensor.hpp"

#include <gtest/gtest.h>

#include <map>
#include <vector>

#include "gpw/manifold.hpp"

using namespace gpw;

namespace {

ManifoldConfig config_h101() {
  // p = 1, f = z1 z0^2
  CoordinateChart chart(1);
  const Expr f = Expr::variable(chart.z(1)) * Expr::pow(Expr::variable(chart.z(0)), 2);
  return ManifoldConfig(1, f);
}

TEST(Chart, LayoutIsBijective) {
  for (int p : {1, 2, 3}) {
    CoordinateChart c(p);
    std::map<int, std::string> seen;
    for (int a = 0; a < c.dim(); ++a) {
      EXPECT_EQ(c.index_of(c.name(a)), a);
      EXPECT_TRUE(seen.emplace(a, c.name(a)).second);
    }
    EXPECT_EQ(c.dim(), 6 + 4 * p);
    EXPECT_EQ(c.dual_of(c.x()), c.xs());
    EXPECT_EQ(c.dual_of(c.zts(p)), c.zt(p));
  }
}

TEST(SparseTensor, CurvatureSymmetriesOnLookup) {
  SparseTensor<Rational> r = SparseTensor<Rational>::covariant(10, 4, Sym::Curv);
  // R(x, z0, zt0, x) = 1 in the p=1 chart: indices (0, 1, 3, 0).
  r.set({0, 1, 3, 0}, Rational(1));
  EXPECT_EQ(r.get({0, 1, 3, 0}), Rational(1));
  EXPECT_EQ(r.get({1, 0, 3, 0}), Rational(-1));   // antisymmetry in (1,2)
  EXPECT_EQ(r.get({0, 1, 0, 3}), Rational(-1));   // antisymmetry in (3,4)
  EXPECT_EQ(r.get({3, 0, 0, 1}), Rational(1));    // pair symmetry
  EXPECT_EQ(r.get({0, 3, 1, 0}), Rational(1));    // both swaps
  EXPECT_EQ(r.get({0, 0, 1, 3}), Rational(0));    // degenerate slot pair
  EXPECT_EQ(r.get({1, 2, 3, 0}), Rational(0));    // unrelated entry
  // Exhaustive first-Bianchi scan over a small index range.
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c)
        for (int d = 0; d < 4; ++d) {
          const Rational s =
              r.get({a, b, c, d}) + r.get({b, c, a, d}) + r.get({c, a, b, d});
          EXPECT_EQ(s, Rational(0)) << a << b << c << d;
        }
}

TEST(SparseTensor, DerivativeSlotsAreSymmetric) {
  SparseTensor<Rational> t = SparseTensor<Rational>::covariant(10, 6, Sym::CurvDeriv);
  t.set({0, 1, 2, 0, 1, 2}, Rational(5));
  EXPECT_EQ(t.get({0, 1, 2, 0, 2, 1}), Rational(5));
  EXPECT_EQ(t.get({0, 2, 1, 0, 1, 2}), Rational(5));  // middle swap via pair symmetry
  EXPECT_EQ(t.get({1, 0, 2, 0, 2, 1}), Rational(-5));
}

TEST(SparseTensor, NoStoredZeros) {
  SparseTensor<double> t = SparseTensor<double>::covariant(4, 2);
  t.set({0, 1}, 0.0);
  EXPECT_EQ(t.stored_count(), 0u);
  t.add({0, 1}, 2.5);
  t.add({0, 1}, -2.5);
  EXPECT_EQ(t.stored_count(), 0u);
}

TEST(Contract, ZeroTensorGivesZero) {
  const auto cfg = config_h101();
  std::vector<Rational> pt(static_cast<std::size_t>(cfg.dim()), Rational(0));
  const auto ginv = metric_inverse_at<Rational>(cfg, pt);
  SparseTensor<Rational> zero = SparseTensor<Rational>::covariant(cfg.dim(), 3);
  const auto r = nabla_r_closed<Rational>(cfg, pt, 0);
  const auto out = contract(zero, 0, r, 0, ginv);
  EXPECT_TRUE(out.empty());
}

TEST(Contract, ScalarCurvatureVanishesOnFamily) {
  // tau: contract R slots (1,4) and (2,3) through the inverse metric.
  const auto cfg = config_h101();
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pt = random_rational_point(cfg.chart(), rng);
    const auto ginv = metric_inverse_at<Rational>(cfg, pt);
    const auto r = nabla_r_closed<Rational>(cfg, pt, 0);
    const auto tau = trace(trace(r, 0, 3, ginv), 0, 1, ginv);
    EXPECT_TRUE(tau.empty());
  }
}

TEST(Contract, RicciNormVanishesOnFamily) {
  // |rho|^2 = g^{i1j1} g^{i2j2} g^{i3j3} g^{i4j4} R_{i1 i2 i3 j1} R_{i4 j2 j3 j4}.
  CoordinateChart chart(1);
  const Expr f = Expr::variable(chart.z(1)) * Expr::pow(Expr::variable(chart.z(0)), 2) +
                 Expr::exp(Expr::variable(chart.z(0)));
  ManifoldConfig cfg(1, f);
  Rng rng(12);
  const auto pt = random_point(cfg.chart(), rng);
  const auto ginv = metric_inverse_at<double>(cfg, pt);
  const auto r = nabla_r_closed<double>(cfg, pt, 0);
  // Contract R slot0 against R slot3 through ginv (the i1--j1 pair), then
  // trace the remaining pairs: slots (after join) are
  // [i2 i3 j1->gone | i4 j2 j3] -> (0:i2, 1:i3, 2:i4wait) use explicit pairing below.
  // Full contraction via contract() + trace() in stages:
  const auto joined = contract(r, 0, r, 3, ginv);  // slots: i2 i3 j1 / i4 j2 j3
  const auto t1 = trace(joined, 0, 4, ginv);       // i2--j2 ; leaves i3 j1 i4 j3
  const auto t2 = trace(t1, 0, 3, ginv);           // i3--j3 ; leaves j1 i4
  const auto t3 = trace(t2, 0, 1, ginv);           // j1--i4
  EXPECT_EQ(t3.order(), 0);
  std::vector<int> none;
  EXPECT_NEAR(t3.get(std::span<const int>(none.data(), 0)), 0.0, 1e-10);
}

TEST(Contract, VarianceAndRangeChecks) {
  const auto cfg = config_h101();
  std::vector<Rational> pt(static_cast<std::size_t>(cfg.dim()), Rational(0));
  const auto g = metric_at<Rational>(cfg, pt);
  const auto ginv = metric_inverse_at<Rational>(cfg, pt);
  auto r = nabla_r_closed<Rational>(cfg, pt, 0);
  EXPECT_THROW(contract(r, 9, r, 0, ginv), Error);
  const auto raised = raise_last_slot(r, ginv);
  EXPECT_THROW(contract(raised, 3, r, 0, ginv), Error);
  EXPECT_THROW(contract(r, 0, r, 1, g), Error);  // metric is not contravariant
}

TEST(Pullback, IdentityFrameIsIdentity) {
  const auto cfg = config_h101();
  Rng rng(13);
  const auto pt = random_rational_point(cfg.chart(), rng);
  const auto r = nabla_r_closed<Rational>(cfg, pt, 1);
  const auto frame = Frame<Rational>::identity(pt);
  EXPECT_TRUE(exact_equal(pullback(r, frame), r));
}

TEST(Pullback, MetricThroughModelFrameIsHyperbolic) {
  // Deferred detail check lives in model_test; here: identity-like sanity
  // that pullback respects multilinearity on a scaled frame.
  const auto cfg = config_h101();
  std::vector<Rational> pt(static_cast<std::size_t>(cfg.dim()), Rational(1));
  const auto g = metric_at<Rational>(cfg, pt);
  Frame<Rational> fr = Frame<Rational>::identity(pt);
  fr.columns(0, 0) = Rational(2);  // scale first column
  const auto pulled = pullback(g, fr);
  EXPECT_EQ(pulled.get({0, 0}), Rational(4) * g.get({0, 0}));
  EXPECT_EQ(pulled.get({0, cfg.chart().xs()}), Rational(2) * g.get({0, cfg.chart().xs()}));
}

TEST(Pullback, Functorial) {
  // pullback by M1 then M2 equals pullback by M1*M2, exactly.
  const int n = 4;
  SparseTensor<Rational> t = SparseTensor<Rational>::covariant(n, 3);
  Rng rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<int> idx{static_cast<int>(rng.uniform_int(0, n - 1)),
                         static_cast<int>(rng.uniform_int(0, n - 1)),
                         static_cast<int>(rng.uniform_int(0, n - 1))};
    t.add(idx, Rational(rng.uniform_int(-5, 5)));
  }
  auto rand_frame = [&]() {
    Frame<Rational> f;
    f.base.assign(n, Rational(0));
    f.columns = Matrix<Rational>(n, n);
    do {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) f.columns(i, j) = Rational(rng.uniform_int(-3, 3));
    } while (f.columns.det() == Rational(0));
    return f;
  };
  const auto f1 = rand_frame();
  const auto f2 = rand_frame();
  Frame<Rational> composed;
  composed.base = f1.base;
  composed.columns = f1.columns * f2.columns;
  const auto lhs = pullback(pullback(t, f1), f2);
  const auto rhs = pullback(t, composed);
  EXPECT_TRUE(exact_equal(lhs, rhs));
}

TEST(RaiseLower, Involution) {
  const auto cfg = config_h101();
  Rng rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    const auto pt = random_rational_point(cfg.chart(), rng);
    const auto g = metric_at<Rational>(cfg, pt);
    const auto ginv = metric_inverse_at<Rational>(cfg, pt);
    auto t = nabla_r_closed<Rational>(cfg, pt, 1);
    const auto back = lower_last_slot(raise_last_slot(t, ginv), g);
    EXPECT_TRUE(exact_equal(back, t));
  }
}

TEST(RaiseLower, OperatorComponentsOfPsiChannel) {
  // f = psi(z0) with psi = e^{z0}: raising the fourth slot of nabla^k R
  // turns the all-z0 component into the dual-of-x direction with value
  // psi^{(k+2)}.
  CoordinateChart c(1);
  ManifoldConfig cfg(1, Expr::exp(Expr::variable(c.z(0))));
  std::vector<double> pt(10, 0.0);
  pt[static_cast<std::size_t>(c.z(0))] = 0.4;
  const auto ginv = metric_inverse_at<double>(cfg, pt);
  for (int k = 2; k <= 4; ++k) {
    auto t = nabla_r_closed<double>(cfg, pt, k);
    const auto op = raise_slot(t, 3, ginv);
    std::vector<int> idx{c.x(), c.z(0), c.z(0), c.xs()};
    for (int j = 0; j < k; ++j) idx.push_back(c.z(0));
    EXPECT_NEAR(op.get(idx), std::exp(0.4), 1e-14) << "k=" << k;
    // No other direction survives in that slot.
    for (int d = 0; d < cfg.dim(); ++d) {
      if (d == c.xs()) continue;
      idx[3] = d;
      EXPECT_EQ(op.get(idx), 0.0);
      idx[3] = c.xs();
    }
  }
}

TEST(RaiseLower, CurvatureOperatorDirection) {
  // With f = 0 at p = 1: R(dx, dz0, dzt0, .) raised gives the dual direction
  // of x with coefficient 1, and R(dx, dz0, dz0, .) vanishes.
  ManifoldConfig cfg(1, Expr::constant(0));
  std::vector<Rational> pt(static_cast<std::size_t>(cfg.dim()), Rational(0));
  const auto ginv = metric_inverse_at<Rational>(cfg, pt);
  const auto r = nabla_r_closed<Rational>(cfg, pt, 0);
  const auto op = raise_last_slot(r, ginv);
  const CoordinateChart& c = cfg.chart();
  EXPECT_EQ(op.get({c.x(), c.z(0), c.zt(0), c.xs()}), Rational(1));
  for (int d = 0; d < cfg.dim(); ++d)
    EXPECT_EQ(op.get({c.x(), c.z(0), c.z(0), d}), Rational(0));
}

// Dense brute-force reference for contraction, small dimensions only.
class DenseTensor {
 public:
  DenseTensor(int dim, int order) : dim_(dim), order_(order), a_(pow_size(dim, order), 0.0) {}

  static DenseTensor from_sparse(const SparseTensor<double>& t) {
    DenseTensor d(t.dim(), t.order());
    for (const auto& [idx, v] : t.expanded_entries()) d.at(idx) = v;
    return d;
  }

  double& at(const std::vector<int>& idx) { return a_[flatten(idx)]; }
  double at(const std::vector<int>& idx) const { return a_[flatten(idx)]; }
  int dim() const { return dim_; }
  int order() const { return order_; }

  // contract slot1 of *this with slot2 of o through dense ginv
  DenseTensor contract_with(int slot1, const DenseTensor& o, int slot2,
                            const std::vector<std::vector<double>>& ginv) const {
    DenseTensor out(dim_, order_ + o.order_ - 2);
    std::vector<int> i1(static_cast<std::size_t>(order_)), i2(static_cast<std::size_t>(o.order_));
    iterate(i1, [&](const std::vector<int>& a) {
      o.iterate(i2, [&](const std::vector<int>& b) {
        const double term = at(a) * ginv[static_cast<std::size_t>(a[static_cast<std::size_t>(slot1)])]
                                        [static_cast<std::size_t>(b[static_cast<std::size_t>(slot2)])] *
                            o.at(b);
        if (term == 0.0) return;
        std::vector<int> key;
        for (int s = 0; s < order_; ++s)
          if (s != slot1) key.push_back(a[static_cast<std::size_t>(s)]);
        for (int s = 0; s < o.order_; ++s)
          if (s != slot2) key.push_back(b[static_cast<std::size_t>(s)]);
        out.at(key) += term;
      });
    });
    return out;
  }

  template <class Fn>
  void iterate(std::vector<int>& idx, const Fn& fn) const {
    iterate_rec(idx, 0, fn);
  }

  double max_abs_diff(const SparseTensor<double>& t) const {
    double worst = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(order_));
    iterate(idx, [&](const std::vector<int>& i) {
      worst = std::max(worst, std::abs(at(i) - t.get(i)));
    });
    return worst;
  }

 private:
  template <class Fn>
  void iterate_rec(std::vector<int>& idx, int pos, const Fn& fn) const {
    if (pos == order_) {
      fn(idx);
      return;
    }
    for (int v = 0; v < dim_; ++v) {
      idx[static_cast<std::size_t>(pos)] = v;
      iterate_rec(idx, pos + 1, fn);
    }
  }
  static std::size_t pow_size(int dim, int order) {
    std::size_t s = 1;
    for (int i = 0; i < order; ++i) s *= static_cast<std::size_t>(dim);
    return s;
  }
  std::size_t flatten(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (int v : idx) f = f * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(v);
    return f;
  }

  int dim_;
  int order_;
  std::vector<double> a_;
};

TEST(Contract, SparseMatchesDenseBruteForce) {
  const auto cfg = config_h101();  // dim 10
  Rng rng(23);
  const auto pt = random_point(cfg.chart(), rng);
  const auto ginv = metric_inverse_at<double>(cfg, pt);
  std::vector<std::vector<double>> gdense(10, std::vector<double>(10, 0.0));
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) gdense[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = ginv.get({a, b});

  const auto r = nabla_r_closed<double>(cfg, pt, 0);  // order 4
  SparseTensor<double> s = SparseTensor<double>::covariant(10, 2);
  for (int trial = 0; trial < 8; ++trial)
    s.add({static_cast<int>(rng.uniform_int(0, 9)), static_cast<int>(rng.uniform_int(0, 9))},
          rng.uniform(-2, 2));

  const auto sparse = contract(r, 2, s, 1, ginv);
  const auto dense =
      DenseTensor::from_sparse(r).contract_with(2, DenseTensor::from_sparse(s), 1, gdense);
  EXPECT_LE(dense.max_abs_diff(sparse), 1e-12);

  const auto sparse2 = contract(s, 0, s, 0, ginv);
  const auto dense2 =
      DenseTensor::from_sparse(s).contract_with(0, DenseTensor::from_sparse(s), 0, gdense);
  EXPECT_LE(dense2.max_abs_diff(sparse2), 1e-12);
}

TEST(Frame, SingularColumnsRejected) {
  Frame<double> f = Frame<double>::identity(std::vector<double>(4, 0.0));
  f.columns(2, 2) = 0.0;
  EXPECT_THROW(f.check_invertible(), Error);
}

}  // namespace
