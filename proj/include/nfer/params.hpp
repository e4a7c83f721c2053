#pragma once
// Parameter bookkeeping shared by the model, optimizer and checkpoints.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "nfer/autodiff.hpp"
#include "nfer/matrix.hpp"

namespace nfer {

/// What a parameter tensor is; drives weight-decay exemption and grouping.
enum class ParamKind {
  Weight,       // dense projection matrices
  Bias,         // additive offsets
  Norm,         // layer-normalization gain/shift
  Householder,  // reflection vectors (scale invariant)
  Embedding,    // learnable tokens and positional table
};

const char* param_kind_name(ParamKind k);

/// True for the kinds that receive decoupled weight decay.
bool decays(ParamKind k);

struct ParamRef {
  std::string name;
  Mat* value = nullptr;
  ParamKind kind = ParamKind::Weight;
};

struct ConstParamRef {
  std::string name;
  const Mat* value = nullptr;
  ParamKind kind = ParamKind::Weight;
};

namespace ad {

/// Maps parameter matrices onto tape nodes for one evaluation. In tracking
/// mode parameters become gradient leaves; otherwise they are constants.
class Binder {
 public:
  Binder(Tape& tape, bool track_gradients) : tape_(tape), track_(track_gradients) {}

  Tape& tape() { return tape_; }
  bool tracking() const { return track_; }

  /// The node for `p`, created on first use.
  Var operator()(const Mat& p);

  Var constant(Mat m) { return tape_.constant(std::move(m)); }

  /// Gradient of the last backward() w.r.t. `p`; zeros if `p` was never bound.
  Mat gradient(const Mat& p);

 private:
  Tape& tape_;
  bool track_;
  std::unordered_map<const Mat*, std::size_t> ids_;
};

}  // namespace ad

}  // namespace nfer
