#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gpw/rational.hpp"
#include "gpw/util.hpp"

namespace gpw {

// Dense row-major matrix over double or Rational. Dimensions here are tiny
// (at most 6+4p), so plain Gauss-Jordan is plenty.
template <class V>
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, V{}) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = V{1};
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  V& operator()(int r, int c) { return a_[static_cast<std::size_t>(r) * cols_ + c]; }
  const V& operator()(int r, int c) const { return a_[static_cast<std::size_t>(r) * cols_ + c]; }

  Matrix operator*(const Matrix& o) const {
    if (cols_ != o.rows_) throw Error("matrix shape mismatch");
    Matrix out(rows_, o.cols_);
    for (int i = 0; i < rows_; ++i)
      for (int k = 0; k < cols_; ++k) {
        const V& v = (*this)(i, k);
        if (v == V{}) continue;
        for (int j = 0; j < o.cols_; ++j) out(i, j) += v * o(k, j);
      }
    return out;
  }

  std::vector<V> apply(const std::vector<V>& x) const {
    if (static_cast<int>(x.size()) != cols_) throw Error("matrix/vector shape mismatch");
    std::vector<V> y(static_cast<std::size_t>(rows_), V{});
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) y[static_cast<std::size_t>(i)] += (*this)(i, j) * x[static_cast<std::size_t>(j)];
    return y;
  }

  std::optional<Matrix> inverse() const {
    if (rows_ != cols_) throw Error("inverse of non-square matrix");
    const int n = rows_;
    Matrix a = *this;
    Matrix inv = identity(n);
    for (int col = 0; col < n; ++col) {
      const int piv = pick_pivot(a, col);
      if (piv < 0) return std::nullopt;
      a.swap_rows(col, piv);
      inv.swap_rows(col, piv);
      const V d = a(col, col);
      for (int j = 0; j < n; ++j) {
        a(col, j) = a(col, j) / d;
        inv(col, j) = inv(col, j) / d;
      }
      for (int r = 0; r < n; ++r) {
        if (r == col) continue;
        const V f = a(r, col);
        if (f == V{}) continue;
        for (int j = 0; j < n; ++j) {
          a(r, j) -= f * a(col, j);
          inv(r, j) -= f * inv(col, j);
        }
      }
    }
    return inv;
  }

  V det() const {
    if (rows_ != cols_) throw Error("determinant of non-square matrix");
    const int n = rows_;
    Matrix a = *this;
    V d{1};
    for (int col = 0; col < n; ++col) {
      const int piv = pick_pivot(a, col);
      if (piv < 0) return V{};
      if (piv != col) {
        a.swap_rows(col, piv);
        d = -d;
      }
      d *= a(col, col);
      for (int r = col + 1; r < n; ++r) {
        const V f = a(r, col) / a(col, col);
        if (f == V{}) continue;
        for (int j = col; j < n; ++j) a(r, j) -= f * a(col, j);
      }
    }
    return d;
  }

  void swap_rows(int r1, int r2) {
    if (r1 == r2) return;
    for (int j = 0; j < cols_; ++j) std::swap((*this)(r1, j), (*this)(r2, j));
  }

 private:
  static int pick_pivot(const Matrix& a, int col) {
    if constexpr (std::is_floating_point_v<V>) {
      int best = -1;
      V mag{};
      for (int r = col; r < a.rows_; ++r) {
        const V m = a(r, col) < 0 ? -a(r, col) : a(r, col);
        if (m > mag) {
          mag = m;
          best = r;
        }
      }
      return mag == V{} ? -1 : best;
    } else {
      for (int r = col; r < a.rows_; ++r)
        if (a(r, col) != V{}) return r;
      return -1;
    }
  }

  int rows_, cols_;
  std::vector<V> a_;
};

}  // namespace gpw
