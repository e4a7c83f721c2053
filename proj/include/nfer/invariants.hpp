#pragma once
// Randomized checks of the structural guarantees, shared by the CLI
// `check-invariants` command.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nfer/model.hpp"
#include "nfer/numerics.hpp"

namespace nfer {

struct InvariantCheck {
  std::string name;
  std::size_t trials = 0;
  double worst = 0;  // largest observed violation
  double tolerance = 0;
  bool passed = true;
};

struct InvariantReport {
  std::vector<InvariantCheck> checks;
  bool passed() const;
};

/// Dual-head attention over `draws` random (d, N, params, input) draws with
/// d in {4, 8, 64} and N in {3, 10, 50}: cross-orthogonality in double and
/// float, decomposition completeness, orthogonality of W and isometry.
InvariantReport check_attention_invariants(std::size_t draws, std::uint64_t seed);

/// d=4, depth 1, three tokens (one 2x2 patch), three vertices, d0=2, two HGNN
/// layers, three classes.
ModelConfig gradcheck_model_config();
Hypergraph gradcheck_hypergraph();

/// Central-difference check of the joint loss against `gradients` for every
/// parameter tensor of `model`.
GradCheckReport model_grad_check(Model model, const Image& image, std::size_t expression, Modality modality, double lambda, double eps = 1e-5,
                                 double tolerance = 1e-4);

/// Both suites above plus a full-model gradient check on the toy config.
InvariantReport run_invariant_checks(std::size_t draws, std::uint64_t seed);

}  // namespace nfer
