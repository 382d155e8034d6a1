#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpw/expr.hpp"
#include "gpw/linalg.hpp"
#include "gpw/rational.hpp"
#include "gpw/util.hpp"

namespace gpw {

// ---------------------------------------------------------------------------
// Coordinate chart on R^{6+4p}: x, z_0..z_p, zt_0..zt_p (the tilde block),
// then the dual block xs, zs_0..zs_p, zts_0..zts_p. Indices are laid out in
// that order; the same ordering is used for frame columns and model bases.
// ---------------------------------------------------------------------------
struct CoordinateChart {
  int p = 1;

  CoordinateChart() = default;
  explicit CoordinateChart(int p_) : p(p_) {
    if (p < 1) throw Error("p must be >= 1");
  }

  int dim() const { return 6 + 4 * p; }

  int x() const { return 0; }
  int z(int i) const { return 1 + i; }
  int zt(int i) const { return p + 2 + i; }
  int xs() const { return 2 * p + 3; }
  int zs(int i) const { return 2 * p + 4 + i; }
  int zts(int i) const { return 3 * p + 5 + i; }

  bool is_x(int a) const { return a == 0; }
  bool is_z(int a) const { return a >= 1 && a <= p + 1; }
  bool is_zt(int a) const { return a >= p + 2 && a <= 2 * p + 2; }
  // s-block: the 2+2p non-dual coordinates other than x.
  bool is_s(int a) const { return a >= 1 && a <= 2 * p + 2; }
  bool is_dual(int a) const { return a >= xs(); }
  int z_index(int a) const { return a - 1; }
  int zt_index(int a) const { return a - (p + 2); }
  // Dual partner under the hyperbolic pairing.
  int dual_of(int a) const { return a < xs() ? a + (2 * p + 3) : a - (2 * p + 3); }

  std::string name(int a) const {
    if (a == x()) return "x";
    if (is_z(a)) return "z" + std::to_string(z_index(a));
    if (is_zt(a)) return "zt" + std::to_string(zt_index(a));
    if (a == xs()) return "xs";
    if (a >= zs(0) && a <= zs(p)) return "zs" + std::to_string(a - zs(0));
    if (a >= zts(0) && a <= zts(p)) return "zts" + std::to_string(a - zts(0));
    throw Error("coordinate index out of range");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (int a = 0; a < dim(); ++a) out.push_back(name(a));
    return out;
  }

  // -1 when unknown.
  int index_of(std::string_view n) const {
    for (int a = 0; a < dim(); ++a)
      if (name(a) == n) return a;
    return -1;
  }
};

enum class Variance : std::uint8_t { Co, Contra };

// Symmetry handling on lookup:
//   None      store/read components verbatim
//   Pair      symmetric order-2 tensor
//   Curv      order-4 tensor with the algebraic curvature symmetries
//   CurvDeriv curvature symmetries on the first four slots and full
//             symmetry over the remaining (derivative) slots
enum class Sym : std::uint8_t { None, Pair, Curv, CurvDeriv };

namespace detail {

constexpr int kMaxOrder = 20;

struct IdxKey {
  std::array<std::uint8_t, kMaxOrder> v{};
  std::uint8_t n = 0;

  bool operator==(const IdxKey& o) const {
    return n == o.n && std::memcmp(v.data(), o.v.data(), n) == 0;
  }
  bool operator<(const IdxKey& o) const {
    if (n != o.n) return n < o.n;
    return std::memcmp(v.data(), o.v.data(), n) < 0;
  }
};

struct IdxKeyHash {
  std::size_t operator()(const IdxKey& k) const {
    std::size_t h = 1469598103934665603ull;
    for (int i = 0; i < k.n; ++i) {
      h ^= k.v[static_cast<std::size_t>(i)];
      h *= 1099511628211ull;
    }
    return h;
  }
};

inline IdxKey make_key(std::span<const int> idx) {
  IdxKey k;
  if (idx.size() > kMaxOrder) throw Error("tensor order exceeds the supported maximum");
  k.n = static_cast<std::uint8_t>(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] > 255) throw Error("index out of range");
    k.v[i] = static_cast<std::uint8_t>(idx[i]);
  }
  return k;
}

inline std::vector<int> key_to_vec(const IdxKey& k) {
  std::vector<int> out(k.n);
  for (int i = 0; i < k.n; ++i) out[static_cast<std::size_t>(i)] = k.v[static_cast<std::size_t>(i)];
  return out;
}

// The eight symmetries of an algebraic curvature tensor acting on the first
// four slots: generated by the two sign-reversing transpositions and the
// pair swap.
struct CurvImage {
  std::array<int, 4> perm;
  int sign;
};
inline const std::array<CurvImage, 8>& curv_group() {
  static const std::array<CurvImage, 8> g = {{
      {{0, 1, 2, 3}, +1},
      {{1, 0, 2, 3}, -1},
      {{0, 1, 3, 2}, -1},
      {{1, 0, 3, 2}, +1},
      {{2, 3, 0, 1}, +1},
      {{3, 2, 0, 1}, -1},
      {{2, 3, 1, 0}, -1},
      {{3, 2, 1, 0}, +1},
  }};
  return g;
}

template <class V>
struct ScalarOps {
  static bool is_zero(const V& v) { return v == V{}; }
  static V negate(const V& v) { return -v; }
};

template <>
struct ScalarOps<Expr> {
  static bool is_zero(const Expr& v) { return v.is_zero(); }
  static Expr negate(const Expr& v) { return -v; }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Sparse tensor: map from index tuples to values, with a declared symmetry
// class applied on lookup. Only canonical representatives are stored; no
// stored entry is (structurally) zero.
// ---------------------------------------------------------------------------
template <class V>
class SparseTensor {
 public:
  SparseTensor() : dim_(0), sym_(Sym::None) {}
  SparseTensor(int dim, std::vector<Variance> variance, Sym sym = Sym::None)
      : dim_(dim), variance_(std::move(variance)), sym_(sym) {
    if (sym_ == Sym::Pair && order() != 2) throw Error("pair symmetry needs order 2");
    if ((sym_ == Sym::Curv || sym_ == Sym::CurvDeriv) && order() < 4)
      throw Error("curvature symmetry needs order >= 4");
    if (sym_ == Sym::Curv && order() != 4) throw Error("curvature symmetry needs order 4");
  }

  static SparseTensor covariant(int dim, int order, Sym sym = Sym::None) {
    return SparseTensor(dim, std::vector<Variance>(static_cast<std::size_t>(order), Variance::Co), sym);
  }

  int dim() const { return dim_; }
  int order() const { return static_cast<int>(variance_.size()); }
  Sym sym() const { return sym_; }
  const std::vector<Variance>& variance() const { return variance_; }
  bool fully_covariant() const {
    return std::all_of(variance_.begin(), variance_.end(),
                       [](Variance v) { return v == Variance::Co; });
  }
  std::size_t stored_count() const { return raw_.size(); }
  bool empty() const { return raw_.empty(); }

  struct Canon {
    detail::IdxKey key;
    int sign;
    bool forced_zero;
  };

  Canon canonicalize(std::span<const int> idx) const {
    if (static_cast<int>(idx.size()) != order()) throw Error("index tuple has wrong order");
    for (int a : idx)
      if (a < 0 || a >= dim_) throw Error("index out of range");
    switch (sym_) {
      case Sym::None:
        return {detail::make_key(idx), +1, false};
      case Sym::Pair: {
        std::array<int, 2> t{idx[0], idx[1]};
        if (t[0] > t[1]) std::swap(t[0], t[1]);
        return {detail::make_key(std::span<const int>(t.data(), 2)), +1, false};
      }
      case Sym::Curv:
      case Sym::CurvDeriv: {
        std::vector<int> tail(idx.begin() + 4, idx.end());
        if (sym_ == Sym::CurvDeriv) std::sort(tail.begin(), tail.end());
        std::map<std::array<int, 4>, int> seen;
        bool zero = false;
        std::array<int, 4> best{};
        int best_sign = 0;
        for (const auto& im : detail::curv_group()) {
          std::array<int, 4> t{idx[im.perm[0]], idx[im.perm[1]], idx[im.perm[2]], idx[im.perm[3]]};
          auto it = seen.find(t);
          if (it != seen.end()) {
            if (it->second != im.sign) zero = true;
          } else {
            seen.emplace(t, im.sign);
          }
        }
        best = seen.begin()->first;
        best_sign = seen.begin()->second;
        std::vector<int> full(best.begin(), best.end());
        full.insert(full.end(), tail.begin(), tail.end());
        return {detail::make_key(full), best_sign, zero};
      }
    }
    throw Error("corrupt symmetry tag");
  }

  void set(std::span<const int> idx, V value) {
    const Canon c = canonicalize(idx);
    if (c.forced_zero) {
      if (!detail::ScalarOps<V>::is_zero(value))
        throw Error("assigning a nonzero value to a symmetry-degenerate slot");
      return;
    }
    if (detail::ScalarOps<V>::is_zero(value)) {
      raw_.erase(c.key);
      return;
    }
    raw_[c.key] = c.sign > 0 ? std::move(value) : detail::ScalarOps<V>::negate(value);
  }
  void set(std::initializer_list<int> idx, V value) {
    set(std::span<const int>(idx.begin(), idx.size()), std::move(value));
  }

  void add(std::span<const int> idx, const V& value) {
    if (detail::ScalarOps<V>::is_zero(value)) return;
    const Canon c = canonicalize(idx);
    if (c.forced_zero) throw Error("accumulating into a symmetry-degenerate slot");
    auto it = raw_.find(c.key);
    V incr = c.sign > 0 ? value : detail::ScalarOps<V>::negate(value);
    if (it == raw_.end()) {
      raw_.emplace(c.key, std::move(incr));
    } else {
      it->second += incr;
      if (detail::ScalarOps<V>::is_zero(it->second)) raw_.erase(it);
    }
  }
  void add(std::initializer_list<int> idx, const V& value) {
    add(std::span<const int>(idx.begin(), idx.size()), value);
  }

  V get(std::span<const int> idx) const {
    const Canon c = canonicalize(idx);
    if (c.forced_zero) return V{};
    auto it = raw_.find(c.key);
    if (it == raw_.end()) return V{};
    return c.sign > 0 ? it->second : detail::ScalarOps<V>::negate(it->second);
  }
  V get(std::initializer_list<int> idx) const {
    return get(std::span<const int>(idx.begin(), idx.size()));
  }

  // Raw stored entries (canonical representatives), sorted for determinism.
  std::vector<std::pair<std::vector<int>, V>> raw_entries() const {
    std::vector<std::pair<detail::IdxKey, V>> tmp(raw_.begin(), raw_.end());
    std::sort(tmp.begin(), tmp.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<std::vector<int>, V>> out;
    out.reserve(tmp.size());
    for (auto& [k, v] : tmp) out.emplace_back(detail::key_to_vec(k), v);
    return out;
  }

  // Every distinct nonzero component reachable from the stored entries by
  // the declared symmetry group.
  std::vector<std::pair<std::vector<int>, V>> expanded_entries() const {
    std::vector<std::pair<std::vector<int>, V>> out;
    for (const auto& [key, value] : raw_entries()) {
      switch (sym_) {
        case Sym::None:
          out.emplace_back(key, value);
          break;
        case Sym::Pair: {
          out.emplace_back(key, value);
          if (key[0] != key[1]) out.emplace_back(std::vector<int>{key[1], key[0]}, value);
          break;
        }
        case Sym::Curv:
        case Sym::CurvDeriv: {
          std::vector<int> tail(key.begin() + 4, key.end());
          std::map<std::array<int, 4>, int> heads;
          for (const auto& im : detail::curv_group()) {
            std::array<int, 4> t{key[static_cast<std::size_t>(im.perm[0])],
                                 key[static_cast<std::size_t>(im.perm[1])],
                                 key[static_cast<std::size_t>(im.perm[2])],
                                 key[static_cast<std::size_t>(im.perm[3])]};
            heads.emplace(t, im.sign);  // first wins; duplicates carry equal sign for stored keys
          }
          std::vector<std::vector<int>> tails;
          std::vector<int> tsorted = tail;
          std::sort(tsorted.begin(), tsorted.end());
          if (sym_ == Sym::CurvDeriv && !tsorted.empty()) {
            do {
              tails.push_back(tsorted);
            } while (std::next_permutation(tsorted.begin(), tsorted.end()));
          } else {
            tails.push_back(tail);
          }
          for (const auto& [head, sign] : heads) {
            for (const auto& t : tails) {
              std::vector<int> full(head.begin(), head.end());
              full.insert(full.end(), t.begin(), t.end());
              out.emplace_back(std::move(full),
                               sign > 0 ? value : detail::ScalarOps<V>::negate(value));
            }
          }
          break;
        }
      }
    }
    return out;
  }

 private:
  int dim_;
  std::vector<Variance> variance_;
  Sym sym_;
  std::unordered_map<detail::IdxKey, V, detail::IdxKeyHash> raw_;
};

// ---------------------------------------------------------------------------
// Frame: ordered tangent basis at a point, columns in chart order.
// ---------------------------------------------------------------------------
template <class V>
struct Frame {
  std::vector<V> base;
  Matrix<V> columns;  // columns[row=coordinate component][col=frame vector]

  static Frame identity(std::vector<V> base_point) {
    const int n = static_cast<int>(base_point.size());
    return Frame{std::move(base_point), Matrix<V>::identity(n)};
  }

  int dim() const { return columns.rows(); }

  std::vector<V> column(int j) const {
    std::vector<V> out(static_cast<std::size_t>(dim()));
    for (int i = 0; i < dim(); ++i) out[static_cast<std::size_t>(i)] = columns(i, j);
    return out;
  }

  void check_invertible() const {
    if constexpr (std::is_floating_point_v<V>) {
      if (std::abs(columns.det()) < 1e-12) throw Error("frame columns are linearly dependent");
    } else {
      if (columns.det() == V{}) throw Error("frame columns are linearly dependent");
    }
  }
};

// ---------------------------------------------------------------------------
// Tensor algebra
// ---------------------------------------------------------------------------

// Contract covariant slot1 of t1 against covariant slot2 of t2 through the
// inverse metric: result = t1 ⊗ t2 with the matched pair summed against
// ginv. Result slot order: t1's remaining slots, then t2's.
template <class V>
SparseTensor<V> contract(const SparseTensor<V>& t1, int slot1, const SparseTensor<V>& t2,
                         int slot2, const SparseTensor<V>& ginv) {
  if (slot1 < 0 || slot1 >= t1.order() || slot2 < 0 || slot2 >= t2.order())
    throw Error("contraction slot out of range");
  if (t1.variance()[static_cast<std::size_t>(slot1)] != Variance::Co ||
      t2.variance()[static_cast<std::size_t>(slot2)] != Variance::Co)
    throw Error("contraction requires covariant slots");
  if (ginv.order() != 2 || ginv.variance()[0] != Variance::Contra ||
      ginv.variance()[1] != Variance::Contra)
    throw Error("inverse metric must be order-2 contravariant");

  std::vector<Variance> var;
  for (int s = 0; s < t1.order(); ++s)
    if (s != slot1) var.push_back(t1.variance()[static_cast<std::size_t>(s)]);
  for (int s = 0; s < t2.order(); ++s)
    if (s != slot2) var.push_back(t2.variance()[static_cast<std::size_t>(s)]);
  SparseTensor<V> out(t1.dim(), var, Sym::None);

  const auto e2 = t2.expanded_entries();
  std::unordered_map<int, std::vector<std::size_t>> by_slot2;
  for (std::size_t i = 0; i < e2.size(); ++i) by_slot2[e2[i].first[static_cast<std::size_t>(slot2)]].push_back(i);

  for (const auto& [i1, v1] : t1.expanded_entries()) {
    const int a = i1[static_cast<std::size_t>(slot1)];
    for (int b = 0; b < t1.dim(); ++b) {
      const V g = ginv.get({a, b});
      if (detail::ScalarOps<V>::is_zero(g)) continue;
      auto it = by_slot2.find(b);
      if (it == by_slot2.end()) continue;
      for (std::size_t idx2 : it->second) {
        const auto& [i2, v2] = e2[idx2];
        std::vector<int> key;
        key.reserve(static_cast<std::size_t>(out.order()));
        for (int s = 0; s < t1.order(); ++s)
          if (s != slot1) key.push_back(i1[static_cast<std::size_t>(s)]);
        for (int s = 0; s < t2.order(); ++s)
          if (s != slot2) key.push_back(i2[static_cast<std::size_t>(s)]);
        out.add(key, v1 * g * v2);
      }
    }
  }
  return out;
}

// Contract two covariant slots of the same tensor through the inverse metric.
template <class V>
SparseTensor<V> trace(const SparseTensor<V>& t, int slot_a, int slot_b,
                      const SparseTensor<V>& ginv) {
  if (slot_a == slot_b || slot_a < 0 || slot_b < 0 || slot_a >= t.order() || slot_b >= t.order())
    throw Error("trace slots out of range");
  if (t.variance()[static_cast<std::size_t>(slot_a)] != Variance::Co ||
      t.variance()[static_cast<std::size_t>(slot_b)] != Variance::Co)
    throw Error("trace requires covariant slots");
  std::vector<Variance> var;
  for (int s = 0; s < t.order(); ++s)
    if (s != slot_a && s != slot_b) var.push_back(t.variance()[static_cast<std::size_t>(s)]);
  SparseTensor<V> out(t.dim(), var, Sym::None);
  for (const auto& [idx, v] : t.expanded_entries()) {
    const V g = ginv.get({idx[static_cast<std::size_t>(slot_a)], idx[static_cast<std::size_t>(slot_b)]});
    if (detail::ScalarOps<V>::is_zero(g)) continue;
    std::vector<int> key;
    for (int s = 0; s < t.order(); ++s)
      if (s != slot_a && s != slot_b) key.push_back(idx[static_cast<std::size_t>(s)]);
    out.add(key, v * g);
  }
  return out;
}

// Raise a covariant slot through the inverse metric (or lower a
// contravariant one through the metric: same loop, different argument).
template <class V>
SparseTensor<V> raise_slot(const SparseTensor<V>& t, int slot, const SparseTensor<V>& ginv) {
  if (slot < 0 || slot >= t.order()) throw Error("slot out of range");
  if (t.variance()[static_cast<std::size_t>(slot)] != Variance::Co)
    throw Error("raise_slot needs a covariant slot");
  std::vector<Variance> var = t.variance();
  var[static_cast<std::size_t>(slot)] = Variance::Contra;
  SparseTensor<V> out(t.dim(), var, Sym::None);
  for (const auto& [idx, v] : t.expanded_entries()) {
    const int a = idx[static_cast<std::size_t>(slot)];
    for (int b = 0; b < t.dim(); ++b) {
      const V g = ginv.get({a, b});
      if (detail::ScalarOps<V>::is_zero(g)) continue;
      std::vector<int> key = idx;
      key[static_cast<std::size_t>(slot)] = b;
      out.add(key, v * g);
    }
  }
  return out;
}

template <class V>
SparseTensor<V> lower_slot(const SparseTensor<V>& t, int slot, const SparseTensor<V>& g) {
  if (slot < 0 || slot >= t.order()) throw Error("slot out of range");
  if (t.variance()[static_cast<std::size_t>(slot)] != Variance::Contra)
    throw Error("lower_slot needs a contravariant slot");
  std::vector<Variance> var = t.variance();
  var[static_cast<std::size_t>(slot)] = Variance::Co;
  SparseTensor<V> out(t.dim(), var, Sym::None);
  for (const auto& [idx, v] : t.expanded_entries()) {
    const int a = idx[static_cast<std::size_t>(slot)];
    for (int b = 0; b < t.dim(); ++b) {
      const V gv = g.get({a, b});
      if (detail::ScalarOps<V>::is_zero(gv)) continue;
      std::vector<int> key = idx;
      key[static_cast<std::size_t>(slot)] = b;
      out.add(key, v * gv);
    }
  }
  return out;
}

template <class V>
SparseTensor<V> raise_last_slot(const SparseTensor<V>& t, const SparseTensor<V>& ginv) {
  return raise_slot(t, t.order() - 1, ginv);
}
template <class V>
SparseTensor<V> lower_last_slot(const SparseTensor<V>& t, const SparseTensor<V>& g) {
  return lower_slot(t, t.order() - 1, g);
}

// Pull a fully covariant tensor back through a frame: entry (a_1..a_r) of
// the result is t applied to frame columns a_1..a_r.
template <class V>
SparseTensor<V> pullback(const SparseTensor<V>& t, const Frame<V>& frame) {
  if (!t.fully_covariant()) throw Error("pullback needs a fully covariant tensor");
  if (t.dim() != frame.dim()) throw Error("tensor/frame dimension mismatch");
  const int n = t.dim();
  // Row view of the frame: for coordinate component b, the frame vectors
  // with a nonzero b-component.
  std::vector<std::vector<std::pair<int, V>>> rows(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b)
    for (int j = 0; j < n; ++j)
      if (!detail::ScalarOps<V>::is_zero(frame.columns(b, j)))
        rows[static_cast<std::size_t>(b)].emplace_back(j, frame.columns(b, j));

  SparseTensor<V> out(n, t.variance(), Sym::None);
  std::vector<int> key(static_cast<std::size_t>(t.order()));
  for (const auto& [idx, v] : t.expanded_entries()) {
    // Backtrack over frame vectors with nonzero components at each slot.
    auto recurse = [&](auto&& self, int slot, const V& acc) -> void {
      if (slot == t.order()) {
        out.add(key, acc);
        return;
      }
      for (const auto& [j, m] : rows[static_cast<std::size_t>(idx[static_cast<std::size_t>(slot)])]) {
        key[static_cast<std::size_t>(slot)] = j;
        self(self, slot + 1, acc * m);
      }
    };
    recurse(recurse, 0, v);
  }
  return out;
}

// Full pairing of a covariant tensor with one vector per slot.
template <class V>
V contract_full(const SparseTensor<V>& t, std::span<const std::vector<V>> vectors) {
  if (static_cast<int>(vectors.size()) != t.order()) throw Error("need one vector per slot");
  V total{};
  for (const auto& [idx, v] : t.expanded_entries()) {
    V term = v;
    bool dead = false;
    for (int s = 0; s < t.order(); ++s) {
      const V& comp = vectors[static_cast<std::size_t>(s)][static_cast<std::size_t>(idx[static_cast<std::size_t>(s)])];
      if (detail::ScalarOps<V>::is_zero(comp)) {
        dead = true;
        break;
      }
      term *= comp;
    }
    if (!dead) total += term;
  }
  return total;
}

// Sup-norm of the difference over the union of supports.
template <class V>
double sup_residual(const SparseTensor<V>& a, const SparseTensor<V>& b) {
  if (a.order() != b.order() || a.dim() != b.dim()) throw Error("tensor shape mismatch");
  std::map<std::vector<int>, bool> keys;
  for (const auto& [k, v] : a.expanded_entries()) keys.emplace(k, true);
  for (const auto& [k, v] : b.expanded_entries()) keys.emplace(k, true);
  double worst = 0.0;
  for (const auto& [k, unused] : keys) {
    const double va = to_double(a.get(k));
    const double vb = to_double(b.get(k));
    worst = std::max(worst, std::abs(va - vb));
  }
  return worst;
}

template <class V>
bool exact_equal(const SparseTensor<V>& a, const SparseTensor<V>& b) {
  if (a.order() != b.order() || a.dim() != b.dim()) return false;
  std::map<std::vector<int>, bool> keys;
  for (const auto& [k, v] : a.expanded_entries()) keys.emplace(k, true);
  for (const auto& [k, v] : b.expanded_entries()) keys.emplace(k, true);
  for (const auto& [k, unused] : keys)
    if (a.get(k) != b.get(k)) return false;
  return true;
}

}  // namespace gpw
