#pragma once
// AdamW with decoupled weight decay and the one-cycle learning-rate schedule.

#include <cstddef>
#include <vector>

#include "nfer/config.hpp"
#include "nfer/matrix.hpp"
#include "nfer/params.hpp"

namespace nfer {

struct AdamWState {
  std::size_t step = 0;
  std::vector<Mat> m;  // first moments, one per parameter
  std::vector<Mat> v;  // second moments

  bool initialized() const { return !m.empty(); }
};

/// One update at learning rate `lr`:
///   p <- p * (1 - lr * wd)            (kinds with decays(kind) only)
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// with bias-corrected m_hat, v_hat at step t = state.step + 1.
/// Throws NumericError naming the parameter when a gradient is not finite;
/// nothing is modified in that case.
void optimizer_step(const std::vector<ParamRef>& params, const std::vector<ConstParamRef>& grads, AdamWState& state, double lr, const AdamWConfig& cfg);

/// Linear warm-up from peak/div_factor to peak over the first
/// warmup_fraction of the steps, then cosine annealing to
/// peak/final_div_factor at the last step.
double lr_schedule(std::size_t step, std::size_t total_steps, double peak, const OneCycle& shape = {});

}  // namespace nfer
