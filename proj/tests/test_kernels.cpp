#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "nfer/kernels.hpp"
#include "nfer/matrix.hpp"
#include "nfer/rng.hpp"
#include "support.hpp"

namespace nfer {
namespace {

namespace k = kernels;

class BackendGuard {
 public:
  ~BackendGuard() { k::reset_backend(); }
};

TEST(Kernels, ScalarMatchesAvx2Dot) {
  if (!k::backend_available(k::Backend::Avx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  Rng rng(11);
  for (std::size_t n = 0; n <= 67; ++n) {
    std::vector<double> a(n), b(n);
    std::vector<float> af(n), bf(n);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      af[i] = static_cast<float>(a[i]);
      bf[i] = static_cast<float>(b[i]);
      mag += std::abs(a[i] * b[i]);
    }
    EXPECT_NEAR(k::scalar::dot(a.data(), b.data(), n), k::avx2::dot(a.data(), b.data(), n), 1e-13 * (1 + mag)) << "n=" << n;
    EXPECT_NEAR(k::scalar::dot(af.data(), bf.data(), n), k::avx2::dot(af.data(), bf.data(), n), 1e-5 * (1 + mag)) << "n=" << n;
  }
}

TEST(Kernels, ScalarMatchesAvx2Axpy) {
  if (!k::backend_available(k::Backend::Avx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  Rng rng(12);
  for (std::size_t n = 0; n <= 67; ++n) {
    std::vector<double> x(n), y1(n), y2(n);
    std::vector<float> xf(n), y1f(n), y2f(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y1[i] = y2[i] = rng.normal();
      xf[i] = static_cast<float>(x[i]);
      y1f[i] = y2f[i] = static_cast<float>(y1[i]);
    }
    k::scalar::axpy(y1.data(), -0.7, x.data(), n);
    k::avx2::axpy(y2.data(), -0.7, x.data(), n);
    k::scalar::axpy(y1f.data(), -0.7f, xf.data(), n);
    k::avx2::axpy(y2f.data(), -0.7f, xf.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(y1[i], y2[i], 1e-14);
      EXPECT_NEAR(y1f[i], y2f[i], 1e-6f);
    }
  }
}

TEST(Kernels, BackendSelection) {
  BackendGuard guard;
  EXPECT_TRUE(k::backend_available(k::Backend::Scalar));
  k::set_backend(k::Backend::Scalar);
  EXPECT_EQ(k::active_backend(), k::Backend::Scalar);
  EXPECT_EQ(k::backend_name(k::Backend::Scalar), "scalar");
  if (k::backend_available(k::Backend::Avx2)) {
    k::set_backend(k::Backend::Avx2);
    EXPECT_EQ(k::active_backend(), k::Backend::Avx2);
  } else {
    EXPECT_THROW(k::set_backend(k::Backend::Avx2), std::invalid_argument);
  }
}

TEST(Kernels, MatmulAgreesAcrossBackends) {
  BackendGuard guard;
  Rng rng(13);
  const Mat a = test::random_matrix(rng, 9, 21), b = test::random_matrix(rng, 21, 13);
  k::set_backend(k::Backend::Scalar);
  const Mat s = matmul(a, b);
  const Mat oracle = test::naive_matmul(a, b);
  EXPECT_LE(max_abs_diff(s, oracle), 1e-13);
  if (k::backend_available(k::Backend::Avx2)) {
    k::set_backend(k::Backend::Avx2);
    EXPECT_LE(max_abs_diff(matmul(a, b), oracle), 1e-13);
  }
}

TEST(Matrix, ProductsAgainstNaiveOracle) {
  Rng rng(14);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 1 + rng.below(8), n = 1 + rng.below(8), p = 1 + rng.below(8);
    const Mat a = test::random_matrix(rng, m, n), b = test::random_matrix(rng, n, p), c = test::random_matrix(rng, p, n),
              d = test::random_matrix(rng, m, p);
    EXPECT_LE(max_abs_diff(matmul(a, b), test::naive_matmul(a, b)), 1e-13);
    EXPECT_LE(max_abs_diff(matmul_nt(a, c), test::naive_matmul(a, test::naive_transpose(c))), 1e-13);
    EXPECT_LE(max_abs_diff(matmul_tn(a, d), test::naive_matmul(test::naive_transpose(a), d)), 1e-13);
    EXPECT_EQ(transpose(a), test::naive_transpose(a));
  }
}

TEST(Matrix, ShapeErrors) {
  const Mat a(2, 3), b(2, 3);
  EXPECT_THROW(matmul(a, b), std::invalid_argument);
  EXPECT_THROW(matmul_tn(a, Mat(3, 1)), std::invalid_argument);
  EXPECT_THROW(add_row_broadcast(a, Mat(1, 2)), std::invalid_argument);
  EXPECT_THROW((Mat{{1, 2}, {3}}), std::invalid_argument);
  EXPECT_THROW(row_block(a, 1, 3), std::invalid_argument);
  Mat c(2, 3);
  EXPECT_THROW(c += Mat(3, 2), std::invalid_argument);
}

TEST(Matrix, Basics) {
  const Mat a{{1, 2}, {3, 4}};
  EXPECT_EQ(add_row_broadcast(a, Mat{{10, 20}}), (Mat{{11, 22}, {13, 24}}));
  EXPECT_EQ(row_block(a, 1, 2), (Mat{{3, 4}}));
  EXPECT_EQ(max_abs(Mat{{-5, 2}}), 5.0);
  EXPECT_EQ(Mat::identity(2), (Mat{{1, 0}, {0, 1}}));
  EXPECT_FALSE(all_finite(Mat{{1, NAN}}));
  EXPECT_EQ(cast<float>(a)(1, 1), 4.0f);
}

}  // namespace
}  // namespace nfer
