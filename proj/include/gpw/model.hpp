#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpw/linalg.hpp"
#include "gpw/manifold.hpp"
#include "gpw/tensor.hpp"
#include "gpw/util.hpp"

namespace gpw {

// Point-free algebraic model: an inner product and curvature-derivative
// tensors A^0..A^k on a basis ordered like the frame columns.
struct Model {
  int p = 1;
  int k = 0;
  int dim = 10;
  SparseTensor<Rational> inner;
  std::vector<SparseTensor<Rational>> tensors;  // tensors[i] has order 4+i

  const SparseTensor<Rational>& curvature(int i) const { return tensors.at(static_cast<std::size_t>(i)); }
};

// The model family: hyperbolic inner product; A^0 links Z_i with Zt_i;
// A^i (1 <= i <= p) links Z_0 with Z_i in one middle slot or any derivative
// slot; A^{p+1} and A^{p+2} have the single all-Z_0 entry.
inline Model build_model(int p, int k) {
  if (p < 1) throw Error("p must be >= 1");
  if (k < 0 || k > p + 2)
    throw Error("model order must lie in 0..p+2, got " + std::to_string(k));
  CoordinateChart c(p);
  Model m;
  m.p = p;
  m.k = k;
  m.dim = c.dim();
  m.inner = SparseTensor<Rational>(m.dim, {Variance::Co, Variance::Co}, Sym::Pair);
  m.inner.set({c.x(), c.xs()}, Rational(1));
  for (int i = 0; i <= p; ++i) {
    m.inner.set({c.z(i), c.zs(i)}, Rational(1));
    m.inner.set({c.zt(i), c.zts(i)}, Rational(1));
  }
  for (int i = 0; i <= k; ++i) {
    SparseTensor<Rational> a(m.dim, std::vector<Variance>(static_cast<std::size_t>(4 + i), Variance::Co),
                             i == 0 ? Sym::Curv : Sym::CurvDeriv);
    if (i == 0) {
      for (int j = 0; j <= p; ++j) a.set({c.x(), c.z(j), c.zt(j), c.x()}, Rational(1));
    } else if (i <= p) {
      std::vector<int> mid{c.x(), c.z(0), c.z(i), c.x()};
      for (int t = 0; t < i; ++t) mid.push_back(c.z(0));
      a.set(mid, Rational(1));
      std::vector<int> tail{c.x(), c.z(0), c.z(0), c.x(), c.z(i)};
      for (int t = 1; t < i; ++t) tail.push_back(c.z(0));
      a.set(tail, Rational(1));
    } else {
      std::vector<int> idx{c.x(), c.z(0), c.z(0), c.x()};
      for (int t = 0; t < i; ++t) idx.push_back(c.z(0));
      a.set(idx, Rational(1));
    }
    m.tensors.push_back(std::move(a));
  }
  return m;
}

// ---------------------------------------------------------------------------
// The reference frame: X = d_x + F d_{xs}, Z_i = d_{z_i} - 1/2 sum_j f_{ij}
// d_{zt_j}, Zt_i = d_{zt_i}, and duals X* = d_{xs}, Z*_i = d_{zs_i},
// Zt*_i = d_{zts_i} + 1/2 sum_j f_{ij} d_{zs_j}. Pulling g and R back
// through it produces exactly the hyperbolic pairing and the unit A^0
// entries, for every admissible f.
// ---------------------------------------------------------------------------
template <class V>
Frame<V> base_frame(const ManifoldConfig& config, std::span<const V> point) {
  const CoordinateChart& c = config.chart();
  const int n = config.dim();
  if (static_cast<int>(point.size()) != n) throw Error("point dimension mismatch");
  Frame<V> fr;
  fr.base.assign(point.begin(), point.end());
  fr.columns = Matrix<V>::identity(n);
  fr.columns(c.xs(), c.x()) = config.F().eval<V>(point);
  const Rational half(1, 2);
  for (int i = 0; i <= config.p(); ++i)
    for (int j = 0; j <= config.p(); ++j) {
      const Expr hess = config.f().multi_partial({c.z(i), c.z(j)});
      if (hess.is_zero()) continue;
      V hv = hess.eval<V>(point);
      if constexpr (std::is_same_v<V, Rational>) {
        hv *= half;
      } else {
        hv *= V{0.5};
      }
      fr.columns(c.zt(j), c.z(i)) -= hv;
      fr.columns(c.zs(j), c.zts(i)) += hv;
    }
  return fr;
}

template <class V>
V pow_int(V base, int e) {
  V acc{1};
  for (int i = 0; i < e; ++i) acc *= base;
  return acc;
}

template <class V>
SparseTensor<V> convert_model_tensor(const SparseTensor<Rational>& t) {
  if constexpr (std::is_same_v<V, Rational>) {
    return t;
  } else {
    SparseTensor<V> out(t.dim(), t.variance(), t.sym());
    for (const auto& [idx, v] : t.raw_entries()) out.set(idx, static_cast<V>(to_double(v)));
    return out;
  }
}

// Coefficients produced by the frame normalization; kept for reporting and
// for residual checks of the triangular systems.
template <class V>
struct NormalizationData {
  int K = 0;                    // ladder length actually normalized
  std::vector<V> eps_pure;      // [l] = (d_z0)^{l+2} f at the point, l = 1..K
  Matrix<V> eps_mixed;          // (j, l) = (d_z0)^{l+1} d_zj f, 1-based
  std::vector<V> z0_correction;  // a_l mixing Z_l into the new Z_0, l = 1..K
  Matrix<V> mixing;             // a_{i,j}: new Z_i = sum_j a_{i,j} Z_j, 1-based
  V eps{1};                     // X rescale (k > p stages only)
  std::vector<V> eps_scale;     // Z_i rescale, index 0..p (all 1 for k <= p)
};

namespace detail {

template <class V>
bool scalar_nonzero(const V& v) {
  if constexpr (std::is_floating_point_v<V>)
    return std::abs(v) > 1e-12;
  else
    return v != V{};
}

// g_point(u, w) for column vectors u, w.
template <class V>
V pair_vectors(const SparseTensor<V>& g, const std::vector<V>& u, const std::vector<V>& w) {
  V acc{};
  for (const auto& [idx, gv] : g.expanded_entries()) {
    const V& a = u[static_cast<std::size_t>(idx[0])];
    const V& b = w[static_cast<std::size_t>(idx[1])];
    if (detail::ScalarOps<V>::is_zero(a) || detail::ScalarOps<V>::is_zero(b)) continue;
    acc += gv * a * b;
  }
  return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise frame normalization, certifying that the tangent space at
// `point` realizes the order-k model. Requires the ladder shape
// f = psi(z_0) + z_1 z0^2 + ... + z_K z0^{K+1} with K = min(k, p); for
// k = p+1 it additionally needs psi^{(p+3)} > 0 at the point, and for
// k = p+2 also psi^{(p+4)} > 0 (those stages rescale by square roots, so
// they are floating-point only).
//
// Construction: (1) mix Z_1..Z_K into Z_0 to kill the pure-Z_0 components
// of nabla^l R via a triangular solve; (2) re-mix Z_1..Z_K triangularly to
// unit-normalize the mixed components; (3) re-solve the Zt block against
// R(X, Z_i, ., X) and complete the dual block through the Gram matrix;
// (4) for k > p, rescale the whole frame.
// ---------------------------------------------------------------------------
template <class V>
std::pair<Frame<V>, NormalizationData<V>> normalize_frame(const ManifoldConfig& config,
                                                          std::span<const V> point, int k) {
  const CoordinateChart& c = config.chart();
  const int p = config.p();
  const int n = config.dim();
  if (k < 0 || k > p + 2)
    throw PreconditionError("k", "normalization order must lie in 0..p+2");
  const int K = std::min(k, p);

  if (k > 0 && !config.ladder_remainder(K))
    throw PreconditionError(
        "f shape", "f must equal psi(z0) + z_1 z0^2 + ... + z_" + std::to_string(K) + " z0^" +
                       std::to_string(K + 1) + " to normalize at order " + std::to_string(k));

  Frame<V> fr = base_frame(config, point);
  NormalizationData<V> data;
  data.K = K;
  data.eps_pure.assign(static_cast<std::size_t>(K + 1), V{});
  data.eps_mixed = Matrix<V>(K + 1, K + 1);
  data.z0_correction.assign(static_cast<std::size_t>(K + 1), V{});
  data.mixing = Matrix<V>(K + 1, K + 1);
  data.eps_scale.assign(static_cast<std::size_t>(p + 1), V{1});

  for (int l = 1; l <= K; ++l) {
    std::vector<int> vars(static_cast<std::size_t>(l + 2), c.z(0));
    data.eps_pure[static_cast<std::size_t>(l)] = config.f().multi_partial(vars).eval<V>(point);
    for (int j = 1; j <= K; ++j) {
      std::vector<int> mixed(static_cast<std::size_t>(l + 1), c.z(0));
      mixed.push_back(c.z(j));
      data.eps_mixed(j, l) = config.f().multi_partial(mixed).eval<V>(point);
    }
  }
  for (int i = 1; i <= K; ++i)
    if (!detail::scalar_nonzero(data.eps_mixed(i, i)))
      throw PreconditionError("eps_{" + std::to_string(i) + "," + std::to_string(i) + "}",
                              "the diagonal derivative eps_{i,i} vanishes at the point for i = " +
                                  std::to_string(i));

  // (1) New Z_0 = Z_0 + sum a_l Z_l: the row for order l reads
  //     0 = eps_l + (l+2) sum_{j >= l} eps_{j,l} a_j, solved from l = K down.
  for (int l = K; l >= 1; --l) {
    V rhs = data.eps_pure[static_cast<std::size_t>(l)] / V(l + 2);
    for (int j = l + 1; j <= K; ++j)
      rhs += data.eps_mixed(j, l) * data.z0_correction[static_cast<std::size_t>(j)];
    data.z0_correction[static_cast<std::size_t>(l)] = -rhs / data.eps_mixed(l, l);
  }

  // (2) New Z_i = sum_{j <= i} a_{i,j} Z_j with 1 = a_{i,i} eps_{i,i} and
  //     0 = sum_{j >= l} a_{i,j} eps_{j,l} for l < i.
  for (int i = 1; i <= K; ++i) {
    data.mixing(i, i) = V{1} / data.eps_mixed(i, i);
    for (int l = i - 1; l >= 1; --l) {
      V rhs{};
      for (int j = l + 1; j <= i; ++j) rhs += data.mixing(i, j) * data.eps_mixed(j, l);
      data.mixing(i, l) = -rhs / data.eps_mixed(l, l);
    }
  }

  // Assemble the mixed Z columns.
  Matrix<V> zcols(n, p + 1);
  for (int i = 0; i <= p; ++i)
    for (int r = 0; r < n; ++r) zcols(r, i) = fr.columns(r, c.z(i));
  Matrix<V> newz(n, p + 1);
  for (int r = 0; r < n; ++r) {
    newz(r, 0) = zcols(r, 0);
    for (int l = 1; l <= K; ++l) newz(r, 0) += data.z0_correction[static_cast<std::size_t>(l)] * zcols(r, l);
    for (int i = 1; i <= p; ++i) {
      if (i <= K) {
        V acc{};
        for (int j = 1; j <= i; ++j) acc += data.mixing(i, j) * zcols(r, j);
        newz(r, i) = acc;
      } else {
        newz(r, i) = zcols(r, i);
      }
    }
  }
  for (int i = 0; i <= p; ++i)
    for (int r = 0; r < n; ++r) fr.columns(r, c.z(i)) = newz(r, i);

  // (3) Zt block: R(X, Z_i, Zt_m, X) equals the z_m-component of Z_i, so the
  // new Zt columns invert the z-component matrix of the new Z columns.
  Matrix<V> comp(p + 1, p + 1);
  for (int i = 0; i <= p; ++i)
    for (int m = 0; m <= p; ++m) comp(i, m) = fr.columns(c.z(m), c.z(i));
  const auto comp_inv = comp.inverse();
  if (!comp_inv) throw Error("z-component matrix is singular");
  for (int j = 0; j <= p; ++j) {
    for (int r = 0; r < n; ++r) fr.columns(r, c.zt(j)) = V{};
    for (int m = 0; m <= p; ++m) fr.columns(c.zt(m), c.zt(j)) = (*comp_inv)(m, j);
  }

  // Dual block: invert the Gram matrix of the span {X, Z, Zt} against the
  // base dual columns.
  const auto g = metric_at(config, point);
  const int half_dim = 2 * p + 3;
  std::vector<std::vector<V>> ucols, wcols;
  std::vector<int> ucol_ids{c.x()};
  for (int i = 0; i <= p; ++i) ucol_ids.push_back(c.z(i));
  for (int i = 0; i <= p; ++i) ucol_ids.push_back(c.zt(i));
  std::vector<int> wcol_ids{c.xs()};
  for (int i = 0; i <= p; ++i) wcol_ids.push_back(c.zs(i));
  for (int i = 0; i <= p; ++i) wcol_ids.push_back(c.zts(i));
  Frame<V> base = base_frame(config, point);
  for (int id : ucol_ids) ucols.push_back(fr.column(id));
  for (int id : wcol_ids) wcols.push_back(base.column(id));

  Matrix<V> gram(half_dim, half_dim);
  for (int u = 0; u < half_dim; ++u)
    for (int w = 0; w < half_dim; ++w)
      gram(u, w) = detail::pair_vectors(g, ucols[static_cast<std::size_t>(u)], wcols[static_cast<std::size_t>(w)]);
  const auto gram_inv = gram.inverse();
  if (!gram_inv) throw Error("dual Gram matrix is singular");
  for (int v = 0; v < half_dim; ++v) {
    std::vector<V> col(static_cast<std::size_t>(n), V{});
    for (int w = 0; w < half_dim; ++w) {
      const V cvw = (*gram_inv)(w, v);
      if (detail::ScalarOps<V>::is_zero(cvw)) continue;
      for (int r = 0; r < n; ++r) col[static_cast<std::size_t>(r)] += cvw * wcols[static_cast<std::size_t>(w)][static_cast<std::size_t>(r)];
    }
    for (int r = 0; r < n; ++r) fr.columns(r, wcol_ids[static_cast<std::size_t>(v)]) = col[static_cast<std::size_t>(r)];
  }

  // (4) Rescaling for the two high orders.
  if (k > p) {
    if constexpr (!std::is_floating_point_v<V>) {
      throw Error("normalization above order p requires floating point (square roots)");
    } else {
      const V s3 = config.psi_derivative(p + 3).eval<V>(point);
      if (!(s3 > V{0}))
        throw PreconditionError("psi^(p+3)", "psi^(p+3) must be positive at the point");
      V eps0, eps;
      if (k == p + 1) {
        eps0 = V{1};
        eps = V{1} / std::sqrt(s3);
      } else {
        const V s4 = config.psi_derivative(p + 4).eval<V>(point);
        if (!(s4 > V{0}))
          throw PreconditionError("psi^(p+4)", "psi^(p+4) must be positive at the point");
        eps0 = s3 / s4;
        V pow_eps0{1};
        for (int i = 0; i < p + 3; ++i) pow_eps0 *= eps0;
        eps = V{1} / std::sqrt(pow_eps0 * s3);
      }
      data.eps = eps;
      data.eps_scale[0] = eps0;
      for (int i = 1; i <= p; ++i) data.eps_scale[static_cast<std::size_t>(i)] = V{1} / (eps * eps * pow_int(eps0, i + 1));
      auto scale_col = [&](int col, V factor) {
        for (int r = 0; r < n; ++r) fr.columns(r, col) *= factor;
      };
      scale_col(c.x(), eps);
      scale_col(c.xs(), V{1} / eps);
      for (int i = 0; i <= p; ++i) {
        const V ei = data.eps_scale[static_cast<std::size_t>(i)];
        scale_col(c.z(i), ei);
        scale_col(c.zs(i), V{1} / ei);
        scale_col(c.zt(i), V{1} / (eps * eps * ei));
        scale_col(c.zts(i), eps * eps * ei);
      }
    }
  }

  fr.check_invertible();
  return {fr, data};
}

// ---------------------------------------------------------------------------
// Certification: sup-norm residuals between the pulled-back tensors and the
// model tensors.
// ---------------------------------------------------------------------------
struct FrameCertificate {
  int order = 0;
  std::vector<double> residuals;  // [0] metric, [1 + i] = nabla^i R vs A^i
  double worst = 0.0;
  bool pass = false;
};

template <class V>
FrameCertificate verify_isomorphism(const ManifoldConfig& config, std::span<const V> point,
                                    const Frame<V>& frame, const Model& model,
                                    double tolerance = 1e-9) {
  FrameCertificate cert;
  cert.order = model.k;
  {
    const auto g = metric_at(config, point);
    SparseTensor<V> inner = convert_model_tensor<V>(model.inner);
    cert.residuals.push_back(sup_residual(pullback(g, frame), inner));
  }
  for (int i = 0; i <= model.k; ++i) {
    const auto nr = nabla_r_closed(config, point, i);
    SparseTensor<V> ai = convert_model_tensor<V>(model.curvature(i));
    cert.residuals.push_back(sup_residual(pullback(nr, frame), ai));
  }
  for (double r : cert.residuals) cert.worst = std::max(cert.worst, r);
  cert.pass = cert.worst <= tolerance;
  return cert;
}

// ---------------------------------------------------------------------------
// Randomized falsification search for a direct-sum splitting that respects
// the inner product and the block structure of A^0. For the model family no
// splitting exists; the search reports exhaustion. A decomposable control
// model is found quickly.
// ---------------------------------------------------------------------------
struct DecompositionOutcome {
  bool found = false;
  std::vector<int> part;  // basis indices of one factor, when found
  std::uint64_t trials_done = 0;
};

inline DecompositionOutcome decomposition_search(const Model& model, std::uint64_t trials,
                                                 std::uint64_t seed = 0x5eed) {
  const int n = model.dim;
  if (n > 62) throw Error("decomposition search supports dim <= 62");
  Rng rng(seed);
  const auto a0_entries = model.tensors.empty() ? std::vector<std::pair<std::vector<int>, Rational>>{}
                                                : model.curvature(0).expanded_entries();
  const auto inner_entries = model.inner.expanded_entries();
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    const std::uint64_t mask = 1 + rng.next() % ((1ull << n) - 2);  // nonempty, proper
    const auto in_part = [&](int i) { return (mask >> i) & 1ull; };
    bool ok = true;
    // Inner product must not pair the two factors. Nondegeneracy of each
    // factor then follows from nondegeneracy of the whole form.
    for (const auto& [idx, v] : inner_entries)
      if (in_part(idx[0]) != in_part(idx[1])) {
        ok = false;
        break;
      }
    if (!ok) continue;
    for (const auto& [idx, v] : a0_entries) {
      const auto first = in_part(idx[0]);
      for (int s = 1; s < 4 && ok; ++s)
        if (in_part(idx[static_cast<std::size_t>(s)]) != first) ok = false;
      if (!ok) break;
    }
    if (!ok) continue;
    DecompositionOutcome out;
    out.found = true;
    out.trials_done = trial + 1;
    for (int i = 0; i < n; ++i)
      if (in_part(i)) out.part.push_back(i);
    return out;
  }
  return {false, {}, trials};
}

}  // namespace gpw
