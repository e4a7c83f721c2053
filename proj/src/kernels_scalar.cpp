#include "nfer/kernels.hpp"

namespace nfer::kernels::scalar {

namespace {

template <class T>
T dot_impl(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy_impl(T* y, T alpha, const T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) { return dot_impl(a, b, n); }
float dot(const float* a, const float* b, std::size_t n) { return dot_impl(a, b, n); }
void axpy(double* y, double alpha, const double* x, std::size_t n) { axpy_impl(y, alpha, x, n); }
void axpy(float* y, float alpha, const float* x, std::size_t n) { axpy_impl(y, alpha, x, n); }

}  // namespace nfer::kernels::scalar
