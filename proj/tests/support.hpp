#pragma once
// Shared generators and brute-force oracles for the unit tests.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nfer/autodiff.hpp"
#include "nfer/hypergraph.hpp"
#include "nfer/matrix.hpp"
#include "nfer/rng.hpp"

namespace nfer::test {

inline Mat random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) { return rng.normal_matrix(rows, cols, scale); }

/// Triple-loop product in long double.
inline Mat naive_matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline Mat naive_transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Mat diag(const std::vector<double>& d) {
  Mat m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

/// Determinant by partial-pivot elimination.
inline double determinant(Mat a) {
  const std::size_t n = a.rows();
  double det = 1;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    if (a(p, c) == 0) return 0;
    if (p != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a(p, k), a(c, k));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t k = c; k < n; ++k) a(r, k) -= f * a(c, k);
    }
  }
  return det;
}

/// Largest singular value via power iteration on A^T A.
inline double spectral_norm(const Mat& a, int iterations = 500) {
  Mat x(a.cols(), 1, 1.0);
  double sigma = 0;
  for (int it = 0; it < iterations; ++it) {
    Mat y = naive_matmul(naive_transpose(a), naive_matmul(a, x));
    double n = 0;
    for (double v : y.flat()) n += v * v;
    n = std::sqrt(n);
    if (n == 0) return 0;
    for (auto& v : y.flat()) v /= n;
    x = y;
    sigma = std::sqrt(n);
  }
  return sigma;
}

inline double layer_norm_oracle(std::vector<double>& row, const Mat& gamma, const Mat& beta, double eps = 1e-5) {
  double mean = 0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(row.size());
  double var = 0;
  for (double v : row) var += (v - mean) * (v - mean);
  var /= static_cast<double>(row.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = (row[i] - mean) * inv * gamma(0, i) + beta(0, i);
  return inv;
}

inline Mat layer_norm_rows(const Mat& x, const Mat& gamma, const Mat& beta) {
  Mat out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> row(x.row(r).begin(), x.row(r).end());
    layer_norm_oracle(row, gamma, beta);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Random hypergraph with every vertex and edge non-empty.
inline Hypergraph random_hypergraph(Rng& rng, std::size_t vertices, std::size_t edges) {
  Mat h(vertices, edges);
  for (std::size_t v = 0; v < vertices; ++v)
    for (std::size_t e = 0; e < edges; ++e) h(v, e) = rng.uniform() < 0.45 ? 1.0 : 0.0;
  for (std::size_t v = 0; v < vertices; ++v) h(v, rng.below(edges)) = 1.0;
  for (std::size_t e = 0; e < edges; ++e) h(rng.below(vertices), e) = 1.0;
  std::vector<std::string> vn, en;
  for (std::size_t v = 0; v < vertices; ++v) vn.push_back("v" + std::to_string(v));
  for (std::size_t e = 0; e < edges; ++e) en.push_back("e" + std::to_string(e));
  return Hypergraph::from_incidence(h, vn, en);
}

/// Central differences of `loss` with respect to every entry of `param`.
inline Mat numeric_gradient(const std::function<double()>& loss, Mat& param, double eps = 1e-6) {
  Mat g(param.rows(), param.cols());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double keep = param.flat()[i];
    param.flat()[i] = keep + eps;
    const double up = loss();
    param.flat()[i] = keep - eps;
    const double down = loss();
    param.flat()[i] = keep;
    g.flat()[i] = (up - down) / (2 * eps);
  }
  return g;
}

inline double max_rel_error(const Mat& analytic, const Mat& numeric) {
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.flat()[i], n = numeric.flat()[i];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}));
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nfer_test_" + name + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace nfer::test
