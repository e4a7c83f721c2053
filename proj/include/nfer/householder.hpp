#pragma once
// Orthogonal matrices parameterized as products of Householder reflections.
//
//   W = H_1 H_2 ... H_m,   H_i = I - 2 v_i v_i^T / |v_i|^2
//
// Any setting of the v_i yields an exactly orthogonal W, so training can move
// the vectors freely. Reflections whose vector norm falls below the guard are
// skipped (treated as identity).

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include "nfer/log.hpp"
#include "nfer/matrix.hpp"
#include "nfer/rng.hpp"

namespace nfer {

inline constexpr double kHouseholderNormGuard = 1e-8;

template <class T>
class HouseholderStack {
 public:
  HouseholderStack() = default;

  /// `vectors` is m x dim; row i is v_{i+1}. dim must be even and 0 <= m <= dim.
  HouseholderStack(std::size_t dim, Matrix<T> vectors, double norm_guard = kHouseholderNormGuard)
      : dim_(dim), vectors_(std::move(vectors)), guard_(norm_guard) {
    if (dim_ == 0 || dim_ % 2 != 0) throw std::invalid_argument("HouseholderStack: dim must be a positive even integer, got " + std::to_string(dim_));
    if (vectors_.rows() == 0 && vectors_.cols() == 0) vectors_ = Matrix<T>(0, dim_);
    if (vectors_.cols() != dim_) throw std::invalid_argument("HouseholderStack: vectors have " + std::to_string(vectors_.cols()) + " columns, expected " + std::to_string(dim_));
    if (vectors_.rows() > dim_) throw std::invalid_argument("HouseholderStack: at most dim reflections are allowed");
    for (std::size_t i = 0; i < count(); ++i) {
      if (!active(i)) logger().warn("householder reflection {} has norm below {}; it acts as identity", i, guard_);
    }
  }

  /// m reflections with i.i.d. standard normal entries, each normalized to unit length.
  static HouseholderStack random(std::size_t dim, std::size_t m, Rng& rng) {
    Matrix<T> v(m, dim);
    for (std::size_t i = 0; i < m; ++i) {
      double norm2 = 0;
      std::vector<double> row(dim);
      do {
        norm2 = 0;
        for (auto& x : row) {
          x = rng.normal();
          norm2 += x * x;
        }
      } while (norm2 < 1e-12);
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t j = 0; j < dim; ++j) v(i, j) = static_cast<T>(row[j] * inv);
    }
    return HouseholderStack(dim, std::move(v));
  }

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return vectors_.rows(); }
  double norm_guard() const { return guard_; }

  const Matrix<T>& vectors() const { return vectors_; }
  Matrix<T>& vectors() { return vectors_; }

  T norm2(std::size_t i) const {
    T s = 0;
    for (T x : vectors_.row(i)) s += x * x;
    return s;
  }

  /// False for a skipped reflection.
  bool active(std::size_t i) const { return std::sqrt(static_cast<double>(norm2(i))) >= guard_; }

  std::size_t active_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < count(); ++i) n += active(i) ? 1 : 0;
    return n;
  }

 private:
  std::size_t dim_ = 0;
  Matrix<T> vectors_;
  double guard_ = kHouseholderNormGuard;
};

/// I - 2 v v^T / |v|^2 for reflection i (identity if skipped).
template <class T>
Matrix<T> reflection_matrix(const HouseholderStack<T>& stack, std::size_t i) {
  const std::size_t d = stack.dim();
  Matrix<T> h = Matrix<T>::identity(d);
  if (!stack.active(i)) return h;
  const auto v = stack.vectors().row(i);
  const T scale = T(2) / stack.norm2(i);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) h(r, c) -= scale * v[r] * v[c];
  return h;
}

/// The full d x d product H_1 H_2 ... H_m, formed by explicit matrix products.
template <class T>
Matrix<T> materialize(const HouseholderStack<T>& stack) {
  Matrix<T> w = Matrix<T>::identity(stack.dim());
  for (std::size_t i = 0; i < stack.count(); ++i) {
    if (!stack.active(i)) continue;
    w = matmul(w, reflection_matrix(stack, i));
  }
  return w;
}

/// In-place X <- X (I - 2 v v^T / |v|^2).
template <class T>
void reflect_rows(Matrix<T>& x, std::span<const T> v, T v_norm2) {
  const T scale = T(2) / v_norm2;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const T proj = kernels::dot(row.data(), v.data(), v.size());
    kernels::axpy(row.data(), -scale * proj, v.data(), v.size());
  }
}

/// X * W computed as m rank-1 updates, O(N d m), without forming W.
template <class T>
Matrix<T> apply_right(Matrix<T> x, const HouseholderStack<T>& stack) {
  if (x.cols() != stack.dim()) {
    throw std::invalid_argument("apply_right: input has " + std::to_string(x.cols()) + " columns, stack dim is " + std::to_string(stack.dim()));
  }
  for (std::size_t i = 0; i < stack.count(); ++i) {
    if (!stack.active(i)) continue;
    reflect_rows(x, stack.vectors().row(i), stack.norm2(i));
  }
  return x;
}

/// Splits W (d x d, d even) into its first d/2 rows and its last d/2 rows.
template <class T>
std::pair<Matrix<T>, Matrix<T>> split_rows(const Matrix<T>& w) {
  if (w.rows() != w.cols()) throw std::invalid_argument("split_rows: matrix must be square, got " + w.shape_str());
  if (w.rows() % 2 != 0) throw std::invalid_argument("split_rows: dimension must be even, got " + std::to_string(w.rows()));
  const std::size_t h = w.rows() / 2;
  return {row_block(w, 0, h), row_block(w, h, w.rows())};
}

/// max |W W^T - I|
template <class T>
T orthogonality_residual(const Matrix<T>& w) {
  auto g = matmul_nt(w, w);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= T(1);
  return max_abs(g);
}

}  // namespace nfer
