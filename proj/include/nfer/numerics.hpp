#pragma once
// Loss primitives, row softmax and the finite-difference gradient checker.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nfer/matrix.hpp"

namespace nfer {

/// Probability clamp used by binary_cross_entropy.
inline constexpr double kBceClamp = 1e-7;

/// Row-wise softmax, stabilized by subtracting each row's maximum.
template <class T>
Matrix<T> softmax_rows(const Matrix<T>& a) {
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    T mx = -std::numeric_limits<T>::infinity();
    for (T x : in) mx = std::max(mx, x);
    T sum = 0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    const T inv = T(1) / sum;
    for (T& x : o) x *= inv;
  }
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sum(exp(x))), shifted by the maximum.
double log_sum_exp(std::span<const double> x);

/// -log softmax(logits)[label]. Throws std::invalid_argument if label is out of range.
double cross_entropy_loss(std::span<const double> logits, std::size_t label);

/// -[l ln s + (1-l) ln(1-s)] with s clamped to [kBceClamp, 1-kBceClamp].
/// Throws std::invalid_argument unless label is 0 or 1.
double binary_cross_entropy(double score, int label);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

// ---------------------------------------------------------------------------
// Gradient checking

/// A named block of parameters: `values` is perturbed in place by the checker
/// and `analytic` holds the gradient to compare against.
struct GradCheckGroup {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckGroupResult {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckGroupResult> groups;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// Denominator floor for relative errors; central differences at eps = 1e-5
/// carry roughly 1e-11 of rounding noise per unit of loss.
inline constexpr double kGradCheckFloor = 1e-6;

/// |a - n| / max(|a|, |n|, kGradCheckFloor)
double grad_rel_error(double analytic, double numeric);

/// Central-difference check of every entry in every group. `loss` is
/// re-evaluated after each perturbation and must read the current values.
/// Throws NumericError naming the parameter if the loss is non-finite while
/// probing.
GradCheckReport grad_check(const std::function<double()>& loss, std::vector<GradCheckGroup> groups, double eps = 1e-5,
                           double tolerance = 1e-4);

}  // namespace nfer
