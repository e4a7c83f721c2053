#include "nfer/numerics.hpp"

#include <algorithm>
#include <stdexcept>

#include "nfer/errors.hpp"

namespace nfer {

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

double cross_entropy_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(label) + " out of range for " +
                                std::to_string(logits.size()) + " classes");
  }
  return log_sum_exp(logits) - logits[label];
}

double binary_cross_entropy(double score, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("binary_cross_entropy: label must be 0 or 1");
  const double s = std::clamp(score, kBceClamp, 1.0 - kBceClamp);
  return label == 1 ? -std::log(s) : -std::log1p(-s);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<double()>& loss, std::vector<GradCheckGroup> groups, double eps,
                           double tolerance) {
  GradCheckReport report;
  for (auto& g : groups) {
    if (g.values.size() != g.analytic.size()) {
      throw std::invalid_argument("grad_check: group '" + g.name + "' has mismatched value/gradient lengths");
    }
    GradCheckGroupResult res;
    res.name = g.name;
    res.count = g.values.size();
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double saved = g.values[i];
      g.values[i] = saved + eps;
      const double fp = loss();
      g.values[i] = saved - eps;
      const double fm = loss();
      g.values[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite loss while probing " + g.name + "[" + std::to_string(i) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err = grad_rel_error(g.analytic[i], numeric);
      if (err > res.max_rel_error || i == 0) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        res.worst_index = i;
        res.worst_analytic = g.analytic[i];
        res.worst_numeric = numeric;
      }
    }
    res.passed = res.max_rel_error <= tolerance;
    report.max_rel_error = std::max(report.max_rel_error, res.max_rel_error);
    report.passed = report.passed && res.passed;
    report.groups.push_back(std::move(res));
  }
  return report;
}

}  // namespace nfer
