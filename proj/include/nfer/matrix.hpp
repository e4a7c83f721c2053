#pragma once
// Dense row-major matrices. Row vectors are 1xn matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nfer/kernels.hpp"

namespace nfer {

template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("Matrix: data length does not match shape");
  }
  /// Nested-list literal: Matrix<double>{{1, 2}, {3, 4}}.
  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  static Matrix row_vector(std::span<const T> v) { return Matrix(1, v.size(), std::vector<T>(v.begin(), v.end())); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Matrix& operator+=(const Matrix& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(T s) {
    for (auto& x : data_) x *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, T s) { return a *= s; }
  friend Matrix operator*(T s, Matrix a) { return a *= s; }

  bool operator==(const Matrix&) const = default;

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

 private:
  void require_same(const Matrix& o, const char* op) const {
    if (!same_shape(o)) throw std::invalid_argument(std::string("Matrix ") + op + ": shape " + shape_str() + " vs " + o.shape_str());
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Mat = Matrix<double>;
using MatF = Matrix<float>;

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace detail

/// A * B
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul: " + a.shape_str() + " * " + b.shape_str());
  Matrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* crow = c.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const T s = a(i, p);
      if (s != T(0)) kernels::axpy(crow, s, b.row(p).data(), b.cols());
    }
  }
  return c;
}

/// A * B^T
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: " + a.shape_str() + " * (" + b.shape_str() + ")^T");
  Matrix<T> c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = kernels::dot(a.row(i).data(), b.row(j).data(), a.cols());
  }
  return c;
}

/// A^T * B
template <class T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require(a.rows() == b.rows(), "matmul_tn: (" + a.shape_str() + ")^T * " + b.shape_str());
  Matrix<T> c(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const T* brow = b.row(p).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T s = a(p, i);
      if (s != T(0)) kernels::axpy(c.row(i).data(), s, brow, b.cols());
    }
  }
  return c;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// Adds a 1xc row vector to every row.
template <class T>
Matrix<T> add_row_broadcast(Matrix<T> a, const Matrix<T>& bias) {
  detail::require(bias.rows() == 1 && bias.cols() == a.cols(), "add_row_broadcast: bias " + bias.shape_str() + " for " + a.shape_str());
  for (std::size_t i = 0; i < a.rows(); ++i) kernels::axpy(a.row(i).data(), T(1), bias.data(), a.cols());
  return a;
}

template <class T>
T max_abs(const Matrix<T>& a) {
  T m = 0;
  for (T x : a.flat()) m = std::max(m, std::abs(x));
  return m;
}

template <class T>
T max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  detail::require(a.same_shape(b), "max_abs_diff: shape " + a.shape_str() + " vs " + b.shape_str());
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

template <class T>
bool all_finite(const Matrix<T>& a) {
  return std::all_of(a.flat().begin(), a.flat().end(), [](T x) { return std::isfinite(x); });
}

/// Rows [begin, end).
template <class T>
Matrix<T> row_block(const Matrix<T>& a, std::size_t begin, std::size_t end) {
  detail::require(begin <= end && end <= a.rows(), "row_block: range out of bounds");
  Matrix<T> out(end - begin, a.cols());
  std::copy(a.data() + begin * a.cols(), a.data() + end * a.cols(), out.data());
  return out;
}

template <class U, class T>
Matrix<U> cast(const Matrix<T>& a) {
  Matrix<U> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.flat()[i] = static_cast<U>(a.flat()[i]);
  return out;
}

}  // namespace nfer
