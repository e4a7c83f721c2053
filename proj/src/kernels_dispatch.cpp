#include <atomic>
#include <stdexcept>
#include <string>

#include "nfer/kernels.hpp"

namespace nfer::kernels {

namespace {

Backend detect() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Backend::Avx2;
#endif
  return Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{detect()};
  return b;
}

}  // namespace

Backend active_backend() { return current().load(std::memory_order_relaxed); }

bool backend_available(Backend b) {
  if (b == Backend::Scalar) return true;
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

void set_backend(Backend b) {
  if (!backend_available(b)) {
    throw std::invalid_argument("kernel backend '" + std::string(backend_name(b)) + "' is not supported on this CPU");
  }
  current().store(b, std::memory_order_relaxed);
}

void reset_backend() { current().store(detect(), std::memory_order_relaxed); }

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

double dot(const double* a, const double* b, std::size_t n) {
  return active_backend() == Backend::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

float dot(const float* a, const float* b, std::size_t n) {
  return active_backend() == Backend::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

void axpy(double* y, double alpha, const double* x, std::size_t n) {
  if (active_backend() == Backend::Avx2) {
    avx2::axpy(y, alpha, x, n);
  } else {
    scalar::axpy(y, alpha, x, n);
  }
}

void axpy(float* y, float alpha, const float* x, std::size_t n) {
  if (active_backend() == Backend::Avx2) {
    avx2::axpy(y, alpha, x, n);
  } else {
    scalar::axpy(y, alpha, x, n);
  }
}

}  // namespace nfer::kernels
