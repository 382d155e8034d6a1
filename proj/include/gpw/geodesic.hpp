#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "gpw/expr.hpp"
#include "gpw/manifold.hpp"
#include "gpw/util.hpp"

namespace gpw {

// Geodesic initial data: position and velocity, full coordinate vectors.
struct GeodesicData {
  std::vector<double> base;
  std::vector<double> velocity;
};

namespace detail {

// sum of poly(s) * e^{b s} terms; the closed-form home of every geodesic
// integrand in the admissible function class.
template <class R>
struct PolyExpTerm {
  R b{};
  std::vector<R> coeff;  // coeff[n] * s^n
};

template <class R>
using PolyExp = std::vector<PolyExpTerm<R>>;

template <class R>
void polyexp_merge(PolyExp<R>& into, const PolyExpTerm<R>& term) {
  for (auto& t : into) {
    if (t.b == term.b) {
      if (t.coeff.size() < term.coeff.size()) t.coeff.resize(term.coeff.size(), R{});
      for (std::size_t i = 0; i < term.coeff.size(); ++i) t.coeff[i] += term.coeff[i];
      return;
    }
  }
  into.push_back(term);
}

template <class R>
PolyExp<R> polyexp_mul(const PolyExp<R>& a, const PolyExp<R>& b) {
  PolyExp<R> out;
  for (const auto& ta : a)
    for (const auto& tb : b) {
      PolyExpTerm<R> t;
      t.b = ta.b + tb.b;
      t.coeff.assign(ta.coeff.size() + tb.coeff.size() - 1, R{});
      for (std::size_t i = 0; i < ta.coeff.size(); ++i)
        for (std::size_t j = 0; j < tb.coeff.size(); ++j) t.coeff[i + j] += ta.coeff[i] * tb.coeff[j];
      polyexp_merge(out, t);
    }
  return out;
}

// Flatten an expression in the single variable `var` into polynomial-times-
// exponential form. Fails (nullopt) when an exp argument is not affine.
template <class R>
std::optional<PolyExp<R>> to_polyexp(const Expr& e, int var) {
  using K = Expr::NodeKind;
  switch (e.kind()) {
    case K::Constant:
      return PolyExp<R>{{R{}, {static_cast<R>(to_double(e.constant_value()))}}};
    case K::Variable:
      if (e.var_id() != var) return std::nullopt;
      return PolyExp<R>{{R{}, {R{}, R{1}}}};
    case K::Sum: {
      PolyExp<R> out;
      for (const auto& k : e.operands()) {
        auto sub = to_polyexp<R>(k, var);
        if (!sub) return std::nullopt;
        for (const auto& t : *sub) polyexp_merge(out, t);
      }
      return out;
    }
    case K::Product: {
      PolyExp<R> out{{R{}, {R{1}}}};
      for (const auto& k : e.operands()) {
        auto sub = to_polyexp<R>(k, var);
        if (!sub) return std::nullopt;
        out = polyexp_mul(out, *sub);
        if (out.size() > 64) return std::nullopt;
      }
      return out;
    }
    case K::Power: {
      auto base = to_polyexp<R>(e.operands()[0], var);
      if (!base) return std::nullopt;
      PolyExp<R> out{{R{}, {R{1}}}};
      for (int i = 0; i < e.exponent(); ++i) {
        out = polyexp_mul(out, *base);
        if (out.size() > 64) return std::nullopt;
      }
      return out;
    }
    case K::Exponential: {
      auto arg = to_polyexp<R>(e.operands()[0], var);
      if (!arg) return std::nullopt;
      if (arg->size() != 1 || (*arg)[0].b != R{} || (*arg)[0].coeff.size() > 2)
        return std::nullopt;  // exp of a non-affine argument
      const auto& c = (*arg)[0].coeff;
      PolyExpTerm<R> t;
      t.b = c.size() > 1 ? c[1] : R{};
      t.coeff = {std::exp(c[0])};
      return PolyExp<R>{t};
    }
  }
  return std::nullopt;
}

// I_n(b, t) = integral_0^t s^n e^{b s} ds.
template <class R>
R exp_moment(int n, R b, R t) {
  if (b == R{}) {
    R p{1};
    for (int i = 0; i <= n; ++i) p *= t;
    return p / static_cast<R>(n + 1);
  }
  if (std::abs(b * t) < R{0.5}) {
    // series: t^{n+1} sum_m (b t)^m / (m! (n+m+1))
    R tp{1};
    for (int i = 0; i <= n; ++i) tp *= t;
    R term{1};  // (bt)^m / m!
    R acc{};
    for (int m = 0; m < 64; ++m) {
      const R add = term / static_cast<R>(n + m + 1);
      acc += add;
      if (std::abs(add) < std::abs(acc) * R{1e-22} + R{1e-300}) break;
      term = term * (b * t) / static_cast<R>(m + 1);
    }
    return tp * acc;
  }
  const R ebt = std::exp(b * t);
  R in = (ebt - R{1}) / b;
  R tn{1};
  for (int k = 1; k <= n; ++k) {
    tn *= t;
    in = (tn * ebt - static_cast<R>(k) * in) / b;
  }
  return in;
}

// integral_0^t (t - s) * poly(s) e^{b s} ds for one polyexp term.
template <class R>
R double_integral_term(const PolyExpTerm<R>& term, R t) {
  R acc{};
  // (t - s) * sum c_k s^k  =  sum (t c_k) s^k - sum c_k s^{k+1}
  for (std::size_t k = 0; k < term.coeff.size(); ++k) {
    acc += t * term.coeff[k] * exp_moment(static_cast<int>(k), term.b, t);
    acc -= term.coeff[k] * exp_moment(static_cast<int>(k) + 1, term.b, t);
  }
  return acc;
}

template <class R>
R double_integral(const PolyExp<R>& pe, R t) {
  R acc{};
  for (const auto& term : pe) acc += double_integral_term(term, t);
  return acc;
}

// Adaptive Simpson fallback for integrands outside the polyexp class.
struct Quadrature {
  double abs_tol = 1e-12;
  int max_depth = 48;

  template <class Fn>
  double integrate(const Fn& f, double a, double b) const {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double achieved = 0.0;
    const double s = simpson(fa, fm, fb, b - a);
    const bool ok = recurse(f, a, b, fa, fm, fb, s, abs_tol, max_depth, achieved);
    if (!ok)
      throw Error("quadrature did not converge to " + std::to_string(abs_tol) +
                  "; achieved about " + std::to_string(achieved));
    return result_;
  }

 private:
  static double simpson(double fa, double fm, double fb, double h) {
    return h / 6.0 * (fa + 4.0 * fm + fb);
  }

  template <class Fn>
  bool recurse(const Fn& f, double a, double b, double fa, double fm, double fb, double whole,
               double tol, int depth, double& achieved) const {
    const double m = 0.5 * (a + b);
    const double flm = f(0.5 * (a + m)), frm = f(0.5 * (m + b));
    const double left = simpson(fa, flm, fm, m - a);
    const double right = simpson(fm, frm, fb, b - m);
    const double err = (left + right - whole) / 15.0;
    if (std::abs(err) <= tol || depth == 0) {
      if (depth == 0 && std::abs(err) > tol) {
        achieved = std::max(achieved, std::abs(err));
        return false;
      }
      result_ += left + right + err;
      return true;
    }
    return recurse(f, a, m, fa, flm, fm, left, tol / 2, depth - 1, achieved) &&
           recurse(f, m, b, fm, frm, fb, right, tol / 2, depth - 1, achieved);
  }

  mutable double result_ = 0.0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Closed-form geodesics. With F the variable metric potential and the curve
// written as (x, s, x*, s*):
//   x(t) = a + b t,   s_i(t) = xi_i + t eta_i,
//   x*(t) = a* + b* t + 2 b   * int_0^t int_0^tau  sum_i eta_i (d_{s_i}F)(xi + sigma eta) dsigma dtau,
//   s*_i(t) = xi*_i + t eta*_i - b^2 * int_0^t int_0^tau (d_{s_i}F)(xi + sigma eta) dsigma dtau.
// The inner integrals collapse to int_0^t (t - sigma) u(sigma) dsigma and the
// integrands are polynomial-times-exponential, so they integrate in closed
// form; a quadrature fallback covers the rest of the admissible class.
// ---------------------------------------------------------------------------
class GeodesicSolver {
 public:
  GeodesicSolver(const ManifoldConfig& config, GeodesicData data)
      : config_(config), data_(std::move(data)), sigma_var_(config.dim()) {
    const int n = config_.dim();
    if (static_cast<int>(data_.base.size()) != n || static_cast<int>(data_.velocity.size()) != n)
      throw Error("geodesic data dimension mismatch");
    const CoordinateChart& c = config_.chart();
    // Substitute the affine path s_j(sigma) = xi_j + sigma eta_j into each
    // d_{s_i}F that is not identically zero.
    for (int s = 1; s <= 2 * config_.p() + 2; ++s) {
      Expr dsF = config_.F().derivative(s);
      if (dsF.is_zero()) continue;
      for (int j = 1; j <= 2 * config_.p() + 2; ++j) {
        if (!dsF.depends_on(j)) continue;
        const Expr path = Expr::constant(Rational(data_.base[static_cast<std::size_t>(j)])) +
                          Expr::constant(Rational(data_.velocity[static_cast<std::size_t>(j)])) *
                              Expr::variable(sigma_var_);
        dsF = dsF.substitute(j, path);
      }
      integrands_.push_back({s, dsF});
    }
    (void)c;
  }

  // Position at parameter t; RealT is double or long double.
  template <class RealT = double>
  std::vector<RealT> position(RealT t) const {
    const int n = config_.dim();
    const CoordinateChart& c = config_.chart();
    std::vector<RealT> out(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a)
      out[static_cast<std::size_t>(a)] = static_cast<RealT>(data_.base[static_cast<std::size_t>(a)]) +
                                         t * static_cast<RealT>(data_.velocity[static_cast<std::size_t>(a)]);
    const RealT beta = static_cast<RealT>(data_.velocity[0]);
    RealT xs_accum{};
    for (const auto& [s, u] : integrands_) {
      const RealT eta = static_cast<RealT>(data_.velocity[static_cast<std::size_t>(s)]);
      const RealT g = integral(u, t);
      // s* picks up -b^2 G_i; x* picks up 2 b sum_i eta_i G_i.
      out[static_cast<std::size_t>(c.dual_of(s))] -= beta * beta * g;
      if (eta != RealT{}) xs_accum += eta * g;
    }
    out[static_cast<std::size_t>(c.xs())] += RealT{2} * beta * xs_accum;
    return out;
  }

  // int_0^t (t - sigma) u(sigma) dsigma for the stored integrand of s_i;
  // exposed for the logarithm map.
  template <class RealT = double>
  RealT integral_for(int s_index, RealT t) const {
    for (const auto& [s, u] : integrands_)
      if (s == s_index) return integral(u, t);
    return RealT{};
  }

  const GeodesicData& data() const { return data_; }

 private:
  template <class RealT>
  RealT integral(const Expr& u, RealT t) const {
    const auto pe = detail::to_polyexp<RealT>(u, sigma_var_);
    if (pe) return detail::double_integral(*pe, t);
    // Fallback: adaptive quadrature (double precision only).
    detail::Quadrature q;
    std::vector<double> pt(static_cast<std::size_t>(sigma_var_) + 1, 0.0);
    const double res = q.integrate(
        [&](double sigma) {
          pt[static_cast<std::size_t>(sigma_var_)] = sigma;
          return (static_cast<double>(t) - sigma) * u.eval<double>(pt);
        },
        0.0, static_cast<double>(t));
    return static_cast<RealT>(res);
  }

  const ManifoldConfig& config_;
  GeodesicData data_;
  int sigma_var_;
  std::vector<std::pair<int, Expr>> integrands_;
};

inline std::vector<double> geodesic_closed(const ManifoldConfig& config, const GeodesicData& data,
                                           double t) {
  return GeodesicSolver(config, data).position(t);
}

// Classical fixed-step fourth-order integration of the geodesic system;
// validation path only.
inline std::vector<double> geodesic_numeric(const ManifoldConfig& config, const GeodesicData& data,
                                            double t, double step) {
  if (step <= 0) throw Error("step must be positive");
  const int n = config.dim();
  const CoordinateChart& c = config.chart();
  std::vector<Expr> dsF(static_cast<std::size_t>(2 * config.p() + 3));
  for (int s = 1; s <= 2 * config.p() + 2; ++s) dsF[static_cast<std::size_t>(s)] = config.F().derivative(s);

  // State y = (position, velocity).
  std::vector<double> y(static_cast<std::size_t>(2 * n));
  for (int a = 0; a < n; ++a) {
    y[static_cast<std::size_t>(a)] = data.base[static_cast<std::size_t>(a)];
    y[static_cast<std::size_t>(n + a)] = data.velocity[static_cast<std::size_t>(a)];
  }
  const auto rhs = [&](const std::vector<double>& st) {
    std::vector<double> d(static_cast<std::size_t>(2 * n), 0.0);
    std::span<const double> pos(st.data(), static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) d[static_cast<std::size_t>(a)] = st[static_cast<std::size_t>(n + a)];
    const double vx = st[static_cast<std::size_t>(n + c.x())];
    double xs_accel = 0.0;
    for (int s = 1; s <= 2 * config.p() + 2; ++s) {
      if (dsF[static_cast<std::size_t>(s)].is_zero()) continue;
      const double dv = dsF[static_cast<std::size_t>(s)].eval<double>(pos);
      const double vs = st[static_cast<std::size_t>(n + s)];
      xs_accel += vs * dv;
      d[static_cast<std::size_t>(n + c.dual_of(s))] = -vx * vx * dv;
    }
    d[static_cast<std::size_t>(n + c.xs())] = 2.0 * vx * xs_accel;
    return d;
  };

  const long long steps = std::max(1ll, std::llround(t / step));
  const double h = t / static_cast<double>(steps);
  std::vector<double> k1, k2, k3, k4, tmp(y.size());
  for (long long i = 0; i < steps; ++i) {
    k1 = rhs(y);
    for (std::size_t j = 0; j < y.size(); ++j) tmp[j] = y[j] + 0.5 * h * k1[j];
    k2 = rhs(tmp);
    for (std::size_t j = 0; j < y.size(); ++j) tmp[j] = y[j] + 0.5 * h * k2[j];
    k3 = rhs(tmp);
    for (std::size_t j = 0; j < y.size(); ++j) tmp[j] = y[j] + h * k3[j];
    k4 = rhs(tmp);
    for (std::size_t j = 0; j < y.size(); ++j)
      y[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
  }
  return std::vector<double>(y.begin(), y.begin() + n);
}

inline std::vector<double> exp_map(const ManifoldConfig& config, const std::vector<double>& base,
                                   const std::vector<double>& tangent) {
  return GeodesicSolver(config, {base, tangent}).position(1.0);
}

// Inverse of exp_map: the affine components invert directly and the starred
// components follow by subtracting the (now known) double-integral terms.
inline std::vector<double> log_map(const ManifoldConfig& config, const std::vector<double>& from,
                                   const std::vector<double>& to) {
  const int n = config.dim();
  if (static_cast<int>(from.size()) != n || static_cast<int>(to.size()) != n)
    throw Error("point dimension mismatch");
  const CoordinateChart& c = config.chart();
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  v[static_cast<std::size_t>(c.x())] = to[static_cast<std::size_t>(c.x())] - from[static_cast<std::size_t>(c.x())];
  for (int s = 1; s <= 2 * config.p() + 2; ++s)
    v[static_cast<std::size_t>(s)] = to[static_cast<std::size_t>(s)] - from[static_cast<std::size_t>(s)];

  GeodesicSolver solver(config, {from, v});
  const double beta = v[static_cast<std::size_t>(c.x())];
  double xs_integral = 0.0;
  for (int s = 1; s <= 2 * config.p() + 2; ++s) {
    const double g = solver.integral_for(s, 1.0);
    const int dual = c.dual_of(s);
    v[static_cast<std::size_t>(dual)] = to[static_cast<std::size_t>(dual)] -
                                        from[static_cast<std::size_t>(dual)] + beta * beta * g;
    xs_integral += v[static_cast<std::size_t>(s)] * g;
  }
  v[static_cast<std::size_t>(c.xs())] = to[static_cast<std::size_t>(c.xs())] -
                                        from[static_cast<std::size_t>(c.xs())] -
                                        2.0 * beta * xs_integral;
  return v;
}

}  // namespace gpw
