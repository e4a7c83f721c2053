#pragma once
// Data-parallel inner loops used by the dense matrix routines.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is picked once at runtime from CPUID and can be
// overridden (tests pin each backend and compare them).

#include <cstddef>
#include <string_view>

namespace nfer::kernels {

enum class Backend { Scalar, Avx2 };

/// Backend currently used by dot/axpy.
Backend active_backend();

/// True when the CPU (and build) can run the given backend.
bool backend_available(Backend b);

/// Forces a backend. Throws std::invalid_argument if it is unavailable.
void set_backend(Backend b);

/// Restores the CPUID-selected default.
void reset_backend();

std::string_view backend_name(Backend b);

double dot(const double* a, const double* b, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);

// y += alpha * x
void axpy(double* y, double alpha, const double* x, std::size_t n);
void axpy(float* y, float alpha, const float* x, std::size_t n);

// Direct entry points, bypassing dispatch.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
void axpy(double* y, double alpha, const double* x, std::size_t n);
void axpy(float* y, float alpha, const float* x, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
void axpy(double* y, double alpha, const double* x, std::size_t n);
void axpy(float* y, float alpha, const float* x, std::size_t n);
}  // namespace avx2

}  // namespace nfer::kernels
