#include "nfer/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nfer/errors.hpp"

namespace nfer {

void optimizer_step(const std::vector<ParamRef>& params, const std::vector<ConstParamRef>& grads, AdamWState& state, double lr, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value->same_shape(*grads[i].value)) {
      throw std::invalid_argument("optimizer_step: gradient for " + params[i].name + " has shape " + grads[i].value->shape_str() + ", parameter " +
                                  params[i].value->shape_str());
    }
    if (!all_finite(*grads[i].value)) throw NumericError("optimizer_step: non-finite gradient in " + params[i].name);
  }
  if (!state.initialized()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value->rows(), p.value->cols());
      state.v.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("optimizer_step: optimizer state does not match parameters");

  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value->flat();
    const auto g = grads[i].value->flat();
    auto m = state.m[i].flat();
    auto v = state.v[i].flat();
    const double decay = decays(params[i].kind) ? 1.0 - lr * cfg.weight_decay : 1.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= decay;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
  ++state.step;
}

double lr_schedule(std::size_t step, std::size_t total, double peak, const OneCycle& shape) {
  if (total == 0 || step >= total) throw std::invalid_argument("lr_schedule: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + ")");
  const double start = peak / shape.div_factor;
  const double floor = peak / shape.final_div_factor;
  const double warm = shape.warmup_fraction * static_cast<double>(total);
  const double s = static_cast<double>(step);
  if (s <= warm) return warm <= 0.0 ? peak : start + (peak - start) * (s / warm);
  const double span = static_cast<double>(total - 1) - warm;
  const double t = span <= 0.0 ? 1.0 : std::min(1.0, (s - warm) / span);
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace nfer
