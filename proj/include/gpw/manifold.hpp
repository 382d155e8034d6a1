#pragma once

#include <map>
#include <memory>
#include <set>
#include <mutex>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gpw/expr.hpp"
#include "gpw/tensor.hpp"
#include "gpw/util.hpp"

namespace gpw {

// Probabilistic identity-zero test for the admissible function class
// (multivariate polynomial plus a univariate exp channel): structural zero,
// else exact rational sampling for polynomials, else floating sampling.
inline bool is_identically_zero(const Expr& e, int nvars) {
  if (e.is_zero()) return true;
  if (e.is_constant()) return false;
  Rng rng(0x5eedf00dULL);
  if (!e.has_exp()) {
    for (int trial = 0; trial < 24; ++trial) {
      std::vector<Rational> pt(static_cast<std::size_t>(nvars));
      for (auto& c : pt)
        c = Rational(rng.uniform_int(-10, 10), rng.uniform_int(1, 5));
      if (e.eval<Rational>(pt) != 0) return false;
    }
    return true;
  }
  double scale = 0.0;
  std::vector<double> vals;
  for (int trial = 0; trial < 24; ++trial) {
    std::vector<double> pt(static_cast<std::size_t>(nvars));
    for (auto& c : pt) c = rng.uniform(-1.7, 1.9);
    const double v = e.eval<double>(pt);
    vals.push_back(v);
    scale = std::max(scale, std::abs(v));
  }
  for (double v : vals)
    if (std::abs(v) > 1e-9 * (1.0 + scale)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// ManifoldConfig: the pair (p, f). f is a function of z_0..z_p from the
// admissible class; F = f + sum_i z_i zt_i is the only variable metric
// component (up to the factor -2).
// ---------------------------------------------------------------------------
class ManifoldConfig {
 public:
  ManifoldConfig(int p, Expr f) : chart_(p), f_(std::move(f)), box_(std::make_shared<CacheBox>()) {
    for (int v : f_.vars()) {
      if (!(v >= chart_.z(0) && v <= chart_.z(p))) {
        const std::string name = v < chart_.dim() ? chart_.name(v) : "v" + std::to_string(v);
        throw Error("f may only depend on z_0..z_p; found variable '" + name + "'");
      }
    }
    if (!f_.exp_args_only_depend_on(chart_.z(0)))
      throw Error("exp arguments in f must depend on z_0 alone");
    Expr F = f_;
    for (int i = 0; i <= p; ++i)
      F += Expr::variable(chart_.z(i)) * Expr::variable(chart_.zt(i));
    F_ = F;
  }

  const CoordinateChart& chart() const { return chart_; }
  int p() const { return chart_.p; }
  int dim() const { return chart_.dim(); }
  std::pair<int, int> signature() const { return {3 + 2 * p(), 3 + 2 * p()}; }
  const Expr& f() const { return f_; }
  const Expr& F() const { return F_; }
  // Exact rational evaluation is available iff f has no exp channel.
  bool rational_mode() const { return !f_.has_exp(); }

  // f minus the ladder monomials z_m z0^{m+1} for m = 1..K, provided the
  // remainder depends on z_0 alone (and f has no z_m dependence beyond the
  // ladder). Empty otherwise.
  std::optional<Expr> ladder_remainder(int K) const {
    if (K < 0 || K > p()) return std::nullopt;
    Expr r = f_;
    const Expr z0 = Expr::variable(chart_.z(0));
    for (int m = 1; m <= K; ++m)
      r -= Expr::variable(chart_.z(m)) * Expr::pow(z0, m + 1);
    for (int m = 1; m <= p(); ++m)
      if (!is_identically_zero(r.derivative(chart_.z(m)), dim())) return std::nullopt;
    return r;
  }

  // The z_0-only channel of the full-ladder shape f = psi(z_0) + z_1 z0^2 +
  // ... + z_p z0^{p+1}.
  std::optional<Expr> psi() const { return ladder_remainder(p()); }

  // n-th z_0 derivative of psi (when the shape holds).
  Expr psi_derivative(int n) const {
    std::lock_guard<std::mutex> lock(box_->mutex);
    if (box_->psi_derivs.empty()) {
      auto ps = psi();
      if (!ps) throw PreconditionError("f shape", "f does not have the psi + ladder shape");
      box_->psi_derivs.push_back(*ps);
    }
    while (static_cast<int>(box_->psi_derivs.size()) <= n)
      box_->psi_derivs.push_back(box_->psi_derivs.back().derivative(chart_.z(0)));
    return box_->psi_derivs[static_cast<std::size_t>(n)];
  }

  // True iff every third partial of f vanishes identically.
  bool f_at_most_quadratic() const {
    for (int a = 0; a <= p(); ++a)
      for (int b = a; b <= p(); ++b)
        for (int c = b; c <= p(); ++c) {
          const int va = chart_.z(a), vb = chart_.z(b), vc = chart_.z(c);
          if (!is_identically_zero(f_.multi_partial({va, vb, vc}), dim())) return false;
        }
    return true;
  }

  // ---- symbolic fields (memoized) ----------------------------------------

  const SparseTensor<Expr>& metric_field() const {
    std::lock_guard<std::mutex> lock(box_->mutex);
    if (!box_->metric) {
      SparseTensor<Expr> g(dim(), {Variance::Co, Variance::Co}, Sym::Pair);
      g.set({chart_.x(), chart_.x()}, Expr::constant(-2) * F_);
      g.set({chart_.x(), chart_.xs()}, Expr::constant(1));
      for (int i = 0; i <= p(); ++i) {
        g.set({chart_.z(i), chart_.zs(i)}, Expr::constant(1));
        g.set({chart_.zt(i), chart_.zts(i)}, Expr::constant(1));
      }
      box_->metric = std::move(g);
    }
    return *box_->metric;
  }

  // Closed-form inverse: the hyperbolic pairs flip, and the (xs, xs)
  // component picks up +2F.
  const SparseTensor<Expr>& metric_inverse_field() const {
    std::lock_guard<std::mutex> lock(box_->mutex);
    if (!box_->metric_inv) {
      SparseTensor<Expr> gi(dim(), {Variance::Contra, Variance::Contra}, Sym::Pair);
      gi.set({chart_.x(), chart_.xs()}, Expr::constant(1));
      gi.set({chart_.xs(), chart_.xs()}, Expr::constant(2) * F_);
      for (int i = 0; i <= p(); ++i) {
        gi.set({chart_.z(i), chart_.zs(i)}, Expr::constant(1));
        gi.set({chart_.zt(i), chart_.zts(i)}, Expr::constant(1));
      }
      box_->metric_inv = std::move(gi);
    }
    return *box_->metric_inv;
  }

  // Closed-form Christoffel symbols, slot order (upper; lower, lower):
  // the covariant derivative of d_x along d_x is sum_s (d_s F) d_{s*}, and
  // d_x along d_s (either order) is -(d_s F) d_{x*}. Everything else is 0.
  const SparseTensor<Expr>& christoffel_field() const {
    std::lock_guard<std::mutex> lock(box_->mutex);
    if (!box_->christoffel) {
      SparseTensor<Expr> gamma(dim(), {Variance::Contra, Variance::Co, Variance::Co}, Sym::None);
      for (int s = 1; s <= 2 * p() + 2; ++s) {
        const Expr dsF = F_.derivative(s);
        if (dsF.is_zero()) continue;
        gamma.set({chart_.dual_of(s), chart_.x(), chart_.x()}, dsF);
        gamma.set({chart_.xs(), chart_.x(), s}, -dsF);
        gamma.set({chart_.xs(), s, chart_.x()}, -dsF);
      }
      box_->christoffel = std::move(gamma);
    }
    return *box_->christoffel;
  }

  // Closed-form covariant derivatives of the curvature tensor: the only
  // components (up to symmetry) are
  //   nabla^k R(d_x, d_a, d_b, d_x; d_c1..d_ck) = (d_a d_b d_c1..d_ck) F
  // with all derivative directions in the s-block (z/zt for k = 0, z only
  // for k >= 1 since F is linear in each zt).
  const SparseTensor<Expr>& nabla_r_field(int k) const {
    if (k < 0) throw Error("k must be >= 0");
    std::lock_guard<std::mutex> lock(box_->mutex);
    auto it = box_->nabla_closed.find(k);
    if (it != box_->nabla_closed.end()) return it->second;

    SparseTensor<Expr> t(dim(), std::vector<Variance>(static_cast<std::size_t>(4 + k), Variance::Co),
                         Sym::CurvDeriv);
    std::vector<int> allowed;
    if (k == 0) {
      for (int s = 1; s <= 2 * p() + 2; ++s) allowed.push_back(s);
    } else {
      for (int i = 0; i <= p(); ++i) allowed.push_back(chart_.z(i));
    }
    std::vector<int> multiset(static_cast<std::size_t>(k + 2));
    enumerate_multisets(allowed, 0, 0, multiset, [&](const std::vector<int>& m) {
      const Expr v = F_.multi_partial(m);
      if (v.is_zero()) return;
      // Every distinct way to pick the two middle slots out of the multiset
      // (m is nondecreasing); the rest become derivative slots.
      std::set<std::pair<int, int>> pairs;
      for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j) pairs.insert({m[i], m[j]});
      for (const auto& [a, b] : pairs) {
        std::vector<int> key{chart_.x(), a, b, chart_.x()};
        bool took_a = false, took_b = false;
        for (int c : m) {
          if (!took_a && c == a) {
            took_a = true;
            continue;
          }
          if (!took_b && c == b) {
            took_b = true;
            continue;
          }
          key.push_back(c);
        }
        t.set(key, v);
      }
    });
    auto [pos, unused] = box_->nabla_closed.emplace(k, std::move(t));
    return pos->second;
  }

 private:
  struct CacheBox {
    std::mutex mutex;
    std::optional<SparseTensor<Expr>> metric, metric_inv, christoffel;
    std::map<int, SparseTensor<Expr>> nabla_closed;
    std::map<int, SparseTensor<Expr>> nabla_oracle;
    std::vector<Expr> psi_derivs;
  };

  template <class Fn>
  static void enumerate_multisets(const std::vector<int>& allowed, std::size_t pos, std::size_t start,
                                  std::vector<int>& multiset, const Fn& fn) {
    if (pos == multiset.size()) {
      fn(multiset);
      return;
    }
    for (std::size_t i = start; i < allowed.size(); ++i) {
      multiset[pos] = allowed[i];
      enumerate_multisets(allowed, pos + 1, i, multiset, fn);
    }
  }

  CoordinateChart chart_;
  Expr f_;
  Expr F_;
  std::shared_ptr<CacheBox> box_;

  friend SparseTensor<Expr> nabla_r_oracle_field(const ManifoldConfig& config, int k, int k_max);
};

// ---------------------------------------------------------------------------
// Field evaluation
// ---------------------------------------------------------------------------
template <class V>
SparseTensor<V> eval_field(const SparseTensor<Expr>& field, std::span<const V> point) {
  SparseTensor<V> out(field.dim(), field.variance(), field.sym());
  for (const auto& [idx, e] : field.raw_entries()) out.set(idx, e.template eval<V>(point));
  return out;
}

template <class V>
SparseTensor<V> metric_at(const ManifoldConfig& config, std::span<const V> point) {
  if (static_cast<int>(point.size()) != config.dim()) throw Error("point dimension mismatch");
  return eval_field(config.metric_field(), point);
}

template <class V>
SparseTensor<V> metric_inverse_at(const ManifoldConfig& config, std::span<const V> point) {
  if (static_cast<int>(point.size()) != config.dim()) throw Error("point dimension mismatch");
  return eval_field(config.metric_inverse_field(), point);
}

template <class V>
SparseTensor<V> christoffel_at(const ManifoldConfig& config, std::span<const V> point) {
  if (static_cast<int>(point.size()) != config.dim()) throw Error("point dimension mismatch");
  return eval_field(config.christoffel_field(), point);
}

template <class V>
SparseTensor<V> nabla_r_closed(const ManifoldConfig& config, std::span<const V> point, int k) {
  if (static_cast<int>(point.size()) != config.dim()) throw Error("point dimension mismatch");
  return eval_field(config.nabla_r_field(k), point);
}

// ---------------------------------------------------------------------------
// Generic Levi-Civita machinery on symbolic component fields. These never
// look at the closed forms above; they are the independent verification
// path (and are exercised on synthetic inputs in the tests).
// ---------------------------------------------------------------------------

// Gamma^c_{ab} = 1/2 g^{cd} (d_a g_{bd} + d_b g_{ad} - d_d g_{ab})
inline SparseTensor<Expr> christoffel_from_metric(const SparseTensor<Expr>& g,
                                                  const SparseTensor<Expr>& ginv) {
  const int n = g.dim();
  SparseTensor<Expr> gamma(n, {Variance::Contra, Variance::Co, Variance::Co}, Sym::None);
  const Expr half = Expr::constant(Rational(1, 2));
  for (const auto& [cd, gcd] : ginv.expanded_entries()) {
    const int c = cd[0], d = cd[1];
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        Expr term = g.get({b, d}).derivative(a) + g.get({a, d}).derivative(b) -
                    g.get({a, b}).derivative(d);
        if (term.is_zero()) continue;
        term = half * gcd * term;
        gamma.add({c, a, b}, term);
        if (a != b) gamma.add({c, b, a}, term);
      }
  }
  return gamma;
}

// R^d_{abc} = d_a Gamma^d_{bc} - d_b Gamma^d_{ac}
//           + Gamma^d_{ae} Gamma^e_{bc} - Gamma^d_{be} Gamma^e_{ac},
// then lowered through g in the fourth slot.
inline SparseTensor<Expr> curvature_from_christoffel(const SparseTensor<Expr>& gamma,
                                                     const SparseTensor<Expr>& g) {
  const int n = gamma.dim();
  SparseTensor<Expr> rup(n, {Variance::Contra, Variance::Co, Variance::Co, Variance::Co},
                         Sym::None);
  const auto entries = gamma.raw_entries();
  for (const auto& [idx, val] : entries) {
    const int e = idx[0], u = idx[1], v = idx[2];
    for (int m = 0; m < n; ++m) {
      const Expr d = val.derivative(m);
      if (d.is_zero()) continue;
      rup.add({e, m, u, v}, d);
      rup.add({e, u, m, v}, -d);
    }
  }
  for (const auto& [i1, v1] : entries) {
    for (const auto& [i2, v2] : entries) {
      if (i1[2] != i2[0]) continue;  // join Gamma^d_{a e} with Gamma^e_{b c}
      const Expr prod = v1 * v2;
      if (prod.is_zero()) continue;
      rup.add({i1[0], i1[1], i2[1], i2[2]}, prod);
      rup.add({i1[0], i2[1], i1[1], i2[2]}, -prod);
    }
  }
  SparseTensor<Expr> r(n, std::vector<Variance>(4, Variance::Co), Sym::None);
  for (const auto& [idx, val] : rup.raw_entries()) {
    for (int d = 0; d < n; ++d) {
      const Expr gv = g.get({idx[0], d});
      if (gv.is_zero()) continue;
      r.add({idx[1], idx[2], idx[3], d}, val * gv);
    }
  }
  return r;
}

// (nabla T)(xi_1..xi_r; eta) = d_eta T(xi..) - sum_j T(.., Gamma(eta, xi_j)-slot, ..)
// on fully covariant component fields; the derivative slot is appended last.
inline SparseTensor<Expr> covariant_derivative_field(const SparseTensor<Expr>& t,
                                                     const SparseTensor<Expr>& gamma) {
  if (!t.fully_covariant()) throw Error("covariant_derivative_field needs a covariant tensor");
  const int n = t.dim();
  const int r = t.order();
  SparseTensor<Expr> out(n, std::vector<Variance>(static_cast<std::size_t>(r + 1), Variance::Co),
                         Sym::None);
  const auto gamma_entries = gamma.raw_entries();
  for (const auto& [idx, val] : t.expanded_entries()) {
    for (int m = 0; m < n; ++m) {
      const Expr d = val.derivative(m);
      if (d.is_zero()) continue;
      std::vector<int> key = idx;
      key.push_back(m);
      out.add(key, d);
    }
    for (const auto& [gi, gv] : gamma_entries) {
      // gi = (upper e, lower m, lower nn): a correction fires wherever a
      // slot of T carries the upper index e.
      for (int j = 0; j < r; ++j) {
        if (idx[static_cast<std::size_t>(j)] != gi[0]) continue;
        std::vector<int> key = idx;
        key[static_cast<std::size_t>(j)] = gi[2];
        key.push_back(gi[1]);
        out.add(key, -(gv * val));
      }
    }
  }
  return out;
}

// The brute-force verification path for nabla^k R: generic Christoffel
// symbols from metric derivatives, generic curvature, generic iterated
// covariant derivative. Cost grows quickly with k, hence the cap.
inline SparseTensor<Expr> nabla_r_oracle_field(const ManifoldConfig& config, int k,
                                               int k_max = 4) {
  if (k < 0) throw Error("k must be >= 0");
  if (k > k_max)
    throw Error("covariant-derivative oracle refused: k = " + std::to_string(k) +
                " exceeds k_max = " + std::to_string(k_max));
  {
    std::lock_guard<std::mutex> lock(config.box_->mutex);
    auto it = config.box_->nabla_oracle.find(k);
    if (it != config.box_->nabla_oracle.end()) return it->second;
  }
  const SparseTensor<Expr> gamma =
      christoffel_from_metric(config.metric_field(), config.metric_inverse_field());
  SparseTensor<Expr> t = curvature_from_christoffel(gamma, config.metric_field());
  {
    std::lock_guard<std::mutex> lock(config.box_->mutex);
    config.box_->nabla_oracle.emplace(0, t);
  }
  for (int j = 1; j <= k; ++j) {
    {
      std::lock_guard<std::mutex> lock(config.box_->mutex);
      auto it = config.box_->nabla_oracle.find(j);
      if (it != config.box_->nabla_oracle.end()) {
        t = it->second;
        continue;
      }
    }
    t = covariant_derivative_field(t, gamma);
    std::lock_guard<std::mutex> lock(config.box_->mutex);
    config.box_->nabla_oracle.emplace(j, t);
  }
  return t;
}

template <class V>
SparseTensor<V> nabla_r_oracle(const ManifoldConfig& config, std::span<const V> point, int k,
                               int k_max = 4) {
  if (static_cast<int>(point.size()) != config.dim()) throw Error("point dimension mismatch");
  return eval_field(nabla_r_oracle_field(config, k, k_max), point);
}

// ---------------------------------------------------------------------------
// Point sampling helpers (deterministic under a seed).
// ---------------------------------------------------------------------------
inline std::vector<double> random_point(const CoordinateChart& chart, Rng& rng, double radius = 1.0) {
  std::vector<double> pt(static_cast<std::size_t>(chart.dim()));
  for (auto& c : pt) c = rng.uniform(-radius, radius);
  return pt;
}

inline std::vector<Rational> random_rational_point(const CoordinateChart& chart, Rng& rng,
                                                   long long max_num = 8, long long max_den = 4) {
  std::vector<Rational> pt(static_cast<std::size_t>(chart.dim()));
  for (auto& c : pt)
    c = Rational(rng.uniform_int(-max_num, max_num), rng.uniform_int(1, max_den));
  return pt;
}

}  // namespace gpw
