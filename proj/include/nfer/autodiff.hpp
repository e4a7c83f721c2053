#pragma once
// A small reverse-mode tape over dense matrices.
//
// Each evaluation owns its own Tape; nodes are appended in evaluation order and
// backward() walks them in reverse. Only the operations the model needs exist.

#include <cstddef>
#include <functional>
#include <vector>

#include "nfer/matrix.hpp"

namespace nfer::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Mat& value() const;
  const Mat& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Var constant(Mat value);
  /// A leaf whose gradient is accumulated (parameters).
  Var leaf(Mat value);

  /// Records an op result. `fn` is called during backward() with the output
  /// gradient if the node requires a gradient.
  Var record(Mat value, bool requires_grad, BackwardFn fn);

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of the last backward() target w.r.t. node `id`; all zeros if the
  /// node was not reached.
  const Mat& grad(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Accumulates `g` into node `id` (no-op for nodes without gradients).
  void accumulate(std::size_t id, const Mat& g);
  /// Mutable gradient buffer for in-place accumulation (allocated on demand).
  Mat& grad_buffer(std::size_t id);

  /// Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// a^T * b
Var matmul_tn(Var a, Var b);
Var add(Var a, Var b);
/// Adds 1xc `bias` to every row of `a`.
Var add_row(Var a, Var bias);
Var scale(Var a, double s);
/// Per-row normalization with learnable 1xc gain/shift.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_rows(Var a);
/// Exact (erf) GELU.
Var gelu(Var a);
Var relu(Var a);
Var sigmoid(Var a);
/// Keeps columns [begin, end) and zeroes the rest.
Var mask_cols(Var a, std::size_t begin, std::size_t end);
/// x * H_1 * ... * H_m with reflection vectors given as rows of `vectors`.
/// Rows with norm below `guard` are skipped.
Var householder_apply(Var x, Var vectors, double guard);
Var concat_rows(const std::vector<Var>& parts);
Var select_row(Var a, std::size_t row);
/// Reinterprets the row-major data with a new shape.
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// 1x1 cross-entropy of 1xM logits against `label`.
Var cross_entropy(Var logits, std::size_t label);
/// 1x1 clamped binary cross-entropy of a 1x1 probability.
Var binary_cross_entropy(Var score, int label);

}  // namespace nfer::ad
