#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gpw/rational.hpp"
#include "gpw/util.hpp"

namespace gpw {

// Immutable expression tree over {rational constants, variables, sums,
// products, non-negative integer powers, exp}. By construction every
// expression is finite on all of R^n (no division, no logarithms).
//
// Normalization is limited to constant folding, flattening of nested
// sums/products, and a canonical ordering of terms/factors. No other
// simplification is attempted.
class Expr {
  enum class Kind : std::uint8_t { Const, Var, Sum, Prod, Pow, Exp };

  struct Node {
    Kind kind;
    Rational value;          // Const
    int var = -1;            // Var
    std::vector<Expr> kids;  // Sum, Prod terms; Pow/Exp argument at kids[0]
    int exponent = 0;        // Pow
  };
  using NodePtr = std::shared_ptr<const Node>;

 public:
  Expr() : Expr(constant(0)) {}

  static Expr constant(Rational v) {
    Node n;
    n.kind = Kind::Const;
    n.value = std::move(v);
    return Expr(std::make_shared<const Node>(std::move(n)));
  }
  static Expr constant(long long v) { return constant(Rational(v)); }

  static Expr variable(int id) {
    if (id < 0) throw Error("variable id must be non-negative");
    Node n;
    n.kind = Kind::Var;
    n.var = id;
    return Expr(std::make_shared<const Node>(std::move(n)));
  }

  static Expr sum(std::vector<Expr> terms) {
    std::vector<Expr> flat;
    Rational c = 0;
    for (auto& t : terms) {
      if (t.node_->kind == Kind::Sum) {
        for (const auto& k : t.node_->kids) {
          if (k.node_->kind == Kind::Const)
            c += k.node_->value;
          else
            flat.push_back(k);
        }
      } else if (t.node_->kind == Kind::Const) {
        c += t.node_->value;
      } else {
        flat.push_back(std::move(t));
      }
    }
    std::sort(flat.begin(), flat.end(), [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });
    if (c != 0) flat.insert(flat.begin(), constant(c));
    if (flat.empty()) return constant(0);
    if (flat.size() == 1) return flat[0];
    Node n;
    n.kind = Kind::Sum;
    n.kids = std::move(flat);
    return Expr(std::make_shared<const Node>(std::move(n)));
  }

  static Expr product(std::vector<Expr> factors) {
    std::vector<Expr> flat;
    Rational c = 1;
    for (auto& f : factors) {
      if (f.node_->kind == Kind::Prod) {
        for (const auto& k : f.node_->kids) {
          if (k.node_->kind == Kind::Const)
            c *= k.node_->value;
          else
            flat.push_back(k);
        }
      } else if (f.node_->kind == Kind::Const) {
        c *= f.node_->value;
      } else {
        flat.push_back(std::move(f));
      }
    }
    if (c == 0) return constant(0);
    std::sort(flat.begin(), flat.end(), [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });
    if (flat.empty()) return constant(c);
    if (c != 1) flat.insert(flat.begin(), constant(c));
    if (flat.size() == 1) return flat[0];
    Node n;
    n.kind = Kind::Prod;
    n.kids = std::move(flat);
    return Expr(std::make_shared<const Node>(std::move(n)));
  }

  static Expr pow(Expr base, int exponent) {
    if (exponent < 0) throw Error("negative exponents are not representable");
    if (exponent == 0) return constant(1);
    if (exponent == 1) return base;
    if (base.node_->kind == Kind::Const) {
      Rational v = 1;
      for (int i = 0; i < exponent; ++i) v *= base.node_->value;
      return constant(v);
    }
    if (base.node_->kind == Kind::Pow)
      return pow(base.node_->kids[0], base.node_->exponent * exponent);
    Node n;
    n.kind = Kind::Pow;
    n.kids.push_back(std::move(base));
    n.exponent = exponent;
    return Expr(std::make_shared<const Node>(std::move(n)));
  }

  static Expr exp(Expr arg) {
    if (arg.is_zero()) return constant(1);
    Node n;
    n.kind = Kind::Exp;
    n.kids.push_back(std::move(arg));
    return Expr(std::make_shared<const Node>(std::move(n)));
  }

  friend Expr operator+(const Expr& a, const Expr& b) { return sum({a, b}); }
  friend Expr operator-(const Expr& a, const Expr& b) {
    return sum({a, product({constant(-1), b})});
  }
  friend Expr operator-(const Expr& a) { return product({constant(-1), a}); }
  friend Expr operator*(const Expr& a, const Expr& b) { return product({a, b}); }
  Expr& operator+=(const Expr& o) { return *this = *this + o; }
  Expr& operator-=(const Expr& o) { return *this = *this - o; }
  Expr& operator*=(const Expr& o) { return *this = *this * o; }

  bool is_zero() const { return node_->kind == Kind::Const && node_->value == 0; }
  bool is_constant() const { return node_->kind == Kind::Const; }
  const Rational& constant_value() const {
    if (!is_constant()) throw Error("not a constant expression");
    return node_->value;
  }

  // Structural introspection (read-only).
  enum class NodeKind { Constant, Variable, Sum, Product, Power, Exponential };
  NodeKind kind() const {
    switch (node_->kind) {
      case Kind::Const: return NodeKind::Constant;
      case Kind::Var: return NodeKind::Variable;
      case Kind::Sum: return NodeKind::Sum;
      case Kind::Prod: return NodeKind::Product;
      case Kind::Pow: return NodeKind::Power;
      case Kind::Exp: return NodeKind::Exponential;
    }
    throw Error("corrupt expression node");
  }
  int var_id() const {
    if (node_->kind != Kind::Var) throw Error("not a variable");
    return node_->var;
  }
  int exponent() const {
    if (node_->kind != Kind::Pow) throw Error("not a power");
    return node_->exponent;
  }
  // Sum/Product terms; for Power and Exponential the argument is at [0].
  const std::vector<Expr>& operands() const { return node_->kids; }

  bool has_exp() const {
    if (node_->kind == Kind::Exp) return true;
    for (const auto& k : node_->kids)
      if (k.has_exp()) return true;
    return false;
  }

  // True iff the argument of every exp node depends on `var` alone.
  bool exp_args_only_depend_on(int var) const {
    if (node_->kind == Kind::Exp) {
      for (int v : node_->kids[0].vars())
        if (v != var) return false;
    }
    for (const auto& k : node_->kids)
      if (!k.exp_args_only_depend_on(var)) return false;
    return true;
  }

  void collect_vars(std::set<int>& out) const {
    if (node_->kind == Kind::Var) out.insert(node_->var);
    for (const auto& k : node_->kids) k.collect_vars(out);
  }
  std::set<int> vars() const {
    std::set<int> s;
    collect_vars(s);
    return s;
  }
  bool depends_on(int var) const {
    if (node_->kind == Kind::Var) return node_->var == var;
    for (const auto& k : node_->kids)
      if (k.depends_on(var)) return true;
    return false;
  }

  // Evaluation. V is double, long double, or Rational. Rational evaluation
  // of an exp node is refused (the value is irrational).
  template <class V>
  V eval(std::span<const V> point) const {
    switch (node_->kind) {
      case Kind::Const: {
        if constexpr (std::is_same_v<V, Rational>)
          return node_->value;
        else
          return static_cast<V>(to_double(node_->value));
      }
      case Kind::Var:
        if (node_->var >= static_cast<int>(point.size()))
          throw Error("unbound variable v" + std::to_string(node_->var) + " (point has " +
                      std::to_string(point.size()) + " coordinates)");
        return point[static_cast<std::size_t>(node_->var)];
      case Kind::Sum: {
        V acc{};
        for (const auto& k : node_->kids) acc += k.eval<V>(point);
        return acc;
      }
      case Kind::Prod: {
        V acc{1};
        for (const auto& k : node_->kids) acc *= k.eval<V>(point);
        return acc;
      }
      case Kind::Pow: {
        V base = node_->kids[0].eval<V>(point);
        V acc{1};
        int e = node_->exponent;
        while (e > 0) {
          if (e & 1) acc *= base;
          base *= base;
          e >>= 1;
        }
        return acc;
      }
      case Kind::Exp: {
        if constexpr (std::is_same_v<V, Rational>) {
          throw Error("exp() has no exact rational value; evaluate in floating point");
        } else {
          return std::exp(node_->kids[0].eval<V>(point));
        }
      }
    }
    throw Error("corrupt expression node");
  }

  double eval_at(std::span<const double> point) const { return eval<double>(point); }

  // Exact partial derivative. Memoized: derivative trees are shared across
  // repeated queries (the cache keeps source nodes alive, so pointer keys
  // stay valid).
  Expr derivative(int var) const {
    {
      std::lock_guard<std::mutex> lock(cache_mutex());
      auto it = cache().find({node_.get(), var});
      if (it != cache().end()) return it->second;
    }
    Expr d = derive_uncached(var);
    std::lock_guard<std::mutex> lock(cache_mutex());
    cache().emplace(CacheKey{node_.get(), var}, d);
    keep_alive().push_back(node_);
    return d;
  }

  // Iterated partial derivative; differentiation order is immaterial, so the
  // variable list is sorted first to maximize cache hits.
  Expr multi_partial(std::span<const int> vars) const {
    std::vector<int> sorted(vars.begin(), vars.end());
    std::sort(sorted.begin(), sorted.end());
    Expr e = *this;
    for (int v : sorted) {
      e = e.derivative(v);
      if (e.is_zero()) break;
    }
    return e;
  }
  Expr multi_partial(std::initializer_list<int> vars) const {
    return multi_partial(std::span<const int>(vars.begin(), vars.size()));
  }

  Expr substitute(int var, const Expr& replacement) const {
    switch (node_->kind) {
      case Kind::Const:
        return *this;
      case Kind::Var:
        return node_->var == var ? replacement : *this;
      case Kind::Sum: {
        std::vector<Expr> kids;
        kids.reserve(node_->kids.size());
        for (const auto& k : node_->kids) kids.push_back(k.substitute(var, replacement));
        return sum(std::move(kids));
      }
      case Kind::Prod: {
        std::vector<Expr> kids;
        kids.reserve(node_->kids.size());
        for (const auto& k : node_->kids) kids.push_back(k.substitute(var, replacement));
        return product(std::move(kids));
      }
      case Kind::Pow:
        return pow(node_->kids[0].substitute(var, replacement), node_->exponent);
      case Kind::Exp:
        return exp(node_->kids[0].substitute(var, replacement));
    }
    throw Error("corrupt expression node");
  }

  // Structural total order; used for canonical term/factor ordering.
  static int compare(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return 0;
    const int ka = static_cast<int>(a.node_->kind), kb = static_cast<int>(b.node_->kind);
    if (ka != kb) return ka < kb ? -1 : 1;
    switch (a.node_->kind) {
      case Kind::Const:
        return a.node_->value < b.node_->value ? -1 : (a.node_->value == b.node_->value ? 0 : 1);
      case Kind::Var:
        return a.node_->var < b.node_->var ? -1 : (a.node_->var == b.node_->var ? 0 : 1);
      case Kind::Pow: {
        const int c = compare(a.node_->kids[0], b.node_->kids[0]);
        if (c != 0) return c;
        return a.node_->exponent < b.node_->exponent ? -1
               : a.node_->exponent == b.node_->exponent ? 0 : 1;
      }
      case Kind::Exp:
        return compare(a.node_->kids[0], b.node_->kids[0]);
      case Kind::Sum:
      case Kind::Prod: {
        const std::size_t n = std::min(a.node_->kids.size(), b.node_->kids.size());
        for (std::size_t i = 0; i < n; ++i) {
          const int c = compare(a.node_->kids[i], b.node_->kids[i]);
          if (c != 0) return c;
        }
        if (a.node_->kids.size() != b.node_->kids.size())
          return a.node_->kids.size() < b.node_->kids.size() ? -1 : 1;
        return 0;
      }
    }
    return 0;
  }

  bool identical(const Expr& o) const { return compare(*this, o) == 0; }

  // ---- S-expression serialization ---------------------------------------
  // Format: (+ a b ...), (* a b ...), (^ e n), (exp e), variables by name,
  // rational literals as 7 or 3/4.
  using NameFn = std::function<std::string(int)>;
  using ResolveFn = std::function<int(std::string_view)>;  // -1 when unknown

  std::string to_sexpr(const NameFn& name = default_name) const {
    std::ostringstream os;
    print(os, name);
    return os.str();
  }

  static Expr parse_sexpr(std::string_view text, const ResolveFn& resolve);

  static std::string default_name(int id) { return "v" + std::to_string(id); }

 private:
  explicit Expr(NodePtr n) : node_(std::move(n)) {}

  Expr derive_uncached(int var) const {
    switch (node_->kind) {
      case Kind::Const:
        return constant(0);
      case Kind::Var:
        return constant(node_->var == var ? 1 : 0);
      case Kind::Sum: {
        std::vector<Expr> kids;
        for (const auto& k : node_->kids) kids.push_back(k.derivative(var));
        return sum(std::move(kids));
      }
      case Kind::Prod: {
        std::vector<Expr> terms;
        for (std::size_t i = 0; i < node_->kids.size(); ++i) {
          Expr d = node_->kids[i].derivative(var);
          if (d.is_zero()) continue;
          std::vector<Expr> factors;
          factors.push_back(std::move(d));
          for (std::size_t j = 0; j < node_->kids.size(); ++j)
            if (j != i) factors.push_back(node_->kids[j]);
          terms.push_back(product(std::move(factors)));
        }
        return sum(std::move(terms));
      }
      case Kind::Pow: {
        Expr d = node_->kids[0].derivative(var);
        if (d.is_zero()) return constant(0);
        return product({constant(node_->exponent), pow(node_->kids[0], node_->exponent - 1),
                        std::move(d)});
      }
      case Kind::Exp: {
        Expr d = node_->kids[0].derivative(var);
        if (d.is_zero()) return constant(0);
        return product({std::move(d), *this});
      }
    }
    throw Error("corrupt expression node");
  }

  void print(std::ostringstream& os, const NameFn& name) const {
    switch (node_->kind) {
      case Kind::Const:
        os << to_string(node_->value);
        return;
      case Kind::Var:
        os << name(node_->var);
        return;
      case Kind::Sum:
      case Kind::Prod: {
        os << (node_->kind == Kind::Sum ? "(+" : "(*");
        for (const auto& k : node_->kids) {
          os << ' ';
          k.print(os, name);
        }
        os << ')';
        return;
      }
      case Kind::Pow:
        os << "(^ ";
        node_->kids[0].print(os, name);
        os << ' ' << node_->exponent << ')';
        return;
      case Kind::Exp:
        os << "(exp ";
        node_->kids[0].print(os, name);
        os << ')';
        return;
    }
  }

  struct CacheKey {
    const Node* node;
    int var;
    bool operator<(const CacheKey& o) const {
      return node < o.node || (node == o.node && var < o.var);
    }
  };
  static std::map<CacheKey, Expr>& cache() {
    static std::map<CacheKey, Expr> c;
    return c;
  }
  static std::vector<NodePtr>& keep_alive() {
    static std::vector<NodePtr> v;
    return v;
  }
  static std::mutex& cache_mutex() {
    static std::mutex m;
    return m;
  }

  NodePtr node_;
};

namespace detail {

struct SexprToken {
  enum class Type { LParen, RParen, Atom, End } type;
  std::string text;
  int line, col;
};

class SexprLexer {
 public:
  explicit SexprLexer(std::string_view s) : s_(s) {}

  SexprToken next() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) advance();
    if (pos_ >= s_.size()) return {SexprToken::Type::End, "", line_, col_};
    const int line = line_, col = col_;
    const char c = s_[pos_];
    if (c == '(') {
      advance();
      return {SexprToken::Type::LParen, "(", line, col};
    }
    if (c == ')') {
      advance();
      return {SexprToken::Type::RParen, ")", line, col};
    }
    std::string atom;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) &&
           s_[pos_] != '(' && s_[pos_] != ')') {
      atom += s_[pos_];
      advance();
    }
    return {SexprToken::Type::Atom, atom, line, col};
  }

 private:
  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

inline bool looks_numeric(const std::string& a) {
  if (a.empty()) return false;
  std::size_t i = a[0] == '-' ? 1 : 0;
  if (i >= a.size()) return false;
  for (; i < a.size(); ++i) {
    const char c = a[i];
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '/')) return false;
  }
  return true;
}

}  // namespace detail

namespace detail {

struct SexprParser {
  SexprLexer& lex;
  bool has_buf = false;
  SexprToken buf{};

  SexprToken take() {
    if (has_buf) {
      has_buf = false;
      return buf;
    }
    return lex.next();
  }
  SexprToken peek() {
    if (!has_buf) {
      buf = lex.next();
      has_buf = true;
    }
    return buf;
  }

  Expr parse_expr(const Expr::ResolveFn& resolve) {
    const auto tok = take();
    using T = SexprToken::Type;
    switch (tok.type) {
      case T::End:
        throw ParseError(tok.line, tok.col, "unexpected end of input");
      case T::RParen:
        throw ParseError(tok.line, tok.col, "unexpected ')'");
      case T::Atom:
        return parse_atom(tok, resolve);
      case T::LParen: {
        const auto head = take();
        if (head.type != T::Atom)
          throw ParseError(head.line, head.col, "expected operator after '('");
        std::vector<Expr> args;
        while (true) {
          const auto p = peek();
          if (p.type == T::End) throw ParseError(p.line, p.col, "missing ')'");
          if (p.type == T::RParen) {
            take();
            break;
          }
          args.push_back(parse_expr(resolve));
        }
        return apply(head, std::move(args));
      }
    }
    throw ParseError(tok.line, tok.col, "unreachable");
  }

  static Expr parse_atom(const SexprToken& tok, const Expr::ResolveFn& resolve) {
    if (looks_numeric(tok.text)) {
      try {
        return Expr::constant(parse_rational(tok.text));
      } catch (const Error& e) {
        throw ParseError(tok.line, tok.col, e.what());
      }
    }
    const int id = resolve(tok.text);
    if (id < 0) throw ParseError(tok.line, tok.col, "unknown variable '" + tok.text + "'");
    return Expr::variable(id);
  }

  Expr apply(const SexprToken& head, std::vector<Expr> args) {
    if (head.text == "+") {
      if (args.empty()) throw ParseError(head.line, head.col, "(+) needs arguments");
      return Expr::sum(std::move(args));
    }
    if (head.text == "*") {
      if (args.empty()) throw ParseError(head.line, head.col, "(*) needs arguments");
      return Expr::product(std::move(args));
    }
    if (head.text == "-") {
      if (args.empty()) throw ParseError(head.line, head.col, "(-) needs arguments");
      if (args.size() == 1) return -args[0];
      Expr acc = args[0];
      for (std::size_t i = 1; i < args.size(); ++i) acc = acc - args[i];
      return acc;
    }
    if (head.text == "^") {
      if (args.size() != 2)
        throw ParseError(head.line, head.col, "(^ base exponent) needs exactly two arguments");
      if (!args[1].is_constant() || denominator(args[1].constant_value()) != 1 ||
          args[1].constant_value() < 0)
        throw ParseError(head.line, head.col, "exponent must be a non-negative integer");
      return Expr::pow(args[0], static_cast<int>(numerator(args[1].constant_value())));
    }
    if (head.text == "exp") {
      if (args.size() != 1)
        throw ParseError(head.line, head.col, "(exp e) needs exactly one argument");
      return Expr::exp(args[0]);
    }
    throw ParseError(head.line, head.col, "unknown operator '" + head.text + "'");
  }
};

}  // namespace detail

inline Expr Expr::parse_sexpr(std::string_view text, const ResolveFn& resolve) {
  detail::SexprLexer lex(text);
  detail::SexprParser parser{lex};
  Expr e = parser.parse_expr(resolve);
  const auto tail = parser.peek();
  if (tail.type != detail::SexprToken::Type::End)
    throw ParseError(tail.line, tail.col, "trailing input after expression");
  return e;
}

}  // namespace gpw
