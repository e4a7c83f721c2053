#pragma once
// Orthogonally decomposed self-attention encoder.
//
// Each block computes a single attention map A = softmax(Q K^T / sqrt(d)) and
// splits the values column-wise into a modality-specific half V_S and a
// modality-invariant half V_I. The halves are projected onto the first and
// second half of the rows of a Householder-parameterized orthogonal W, so
//
//   O_S = A V_S W_top,  O_I = A V_I W_bot,  O_S O_I^T = 0,  O_S + O_I = A V W.
//
// Token layout: row 0 is [class], row 1 is [spectrum], rows 2.. are patches.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "nfer/autodiff.hpp"
#include "nfer/householder.hpp"
#include "nfer/image.hpp"
#include "nfer/matrix.hpp"
#include "nfer/numerics.hpp"
#include "nfer/params.hpp"
#include "nfer/rng.hpp"

namespace nfer {

enum class Modality { NIR = 0, VIS = 1 };

inline constexpr std::size_t kClassRow = 0;
inline constexpr std::size_t kSpectrumRow = 1;
inline constexpr std::size_t kSpecialTokens = 2;

struct TokenSequence {
  Mat z;  // N x d

  std::size_t tokens() const { return z.rows(); }
  std::size_t dim() const { return z.cols(); }
};

template <class T>
struct AttentionWeights {
  Matrix<T> wq, wk, wv;  // d x d
  Matrix<T> bq, bk, bv;  // 1 x d
  HouseholderStack<T> householder;

  std::size_t dim() const { return wq.rows(); }

  static AttentionWeights random(std::size_t d, Rng& rng, double weight_std, std::size_t reflections) {
    AttentionWeights a;
    a.wq = rng.normal_matrix<T>(d, d, weight_std);
    a.wk = rng.normal_matrix<T>(d, d, weight_std);
    a.wv = rng.normal_matrix<T>(d, d, weight_std);
    a.bq = Matrix<T>(1, d);
    a.bk = Matrix<T>(1, d);
    a.bv = Matrix<T>(1, d);
    a.householder = HouseholderStack<T>::random(d, reflections, rng);
    return a;
  }
};

struct LayerNormParams {
  Mat gamma;  // 1 x d
  Mat beta;   // 1 x d

  static LayerNormParams identity(std::size_t d) { return {Mat(1, d, 1.0), Mat(1, d, 0.0)}; }
};

struct FeedForwardParams {
  Mat w1, b1;  // d x h, 1 x h
  Mat w2, b2;  // h x d, 1 x d
};

struct SaodBlockParams {
  LayerNormParams norm1;
  AttentionWeights<double> attention;
  LayerNormParams norm2;
  FeedForwardParams ffn;

  std::size_t dim() const { return attention.dim(); }

  static SaodBlockParams random(std::size_t d, std::size_t ffn_hidden, std::size_t reflections, Rng& rng);

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "norm1.gamma", self.norm1.gamma, ParamKind::Norm);
    f(prefix + "norm1.beta", self.norm1.beta, ParamKind::Norm);
    f(prefix + "attn.wq", self.attention.wq, ParamKind::Weight);
    f(prefix + "attn.bq", self.attention.bq, ParamKind::Bias);
    f(prefix + "attn.wk", self.attention.wk, ParamKind::Weight);
    f(prefix + "attn.bk", self.attention.bk, ParamKind::Bias);
    f(prefix + "attn.wv", self.attention.wv, ParamKind::Weight);
    f(prefix + "attn.bv", self.attention.bv, ParamKind::Bias);
    f(prefix + "attn.householder", self.attention.householder.vectors(), ParamKind::Householder);
    f(prefix + "norm2.gamma", self.norm2.gamma, ParamKind::Norm);
    f(prefix + "norm2.beta", self.norm2.beta, ParamKind::Norm);
    f(prefix + "ffn.w1", self.ffn.w1, ParamKind::Weight);
    f(prefix + "ffn.b1", self.ffn.b1, ParamKind::Bias);
    f(prefix + "ffn.w2", self.ffn.w2, ParamKind::Weight);
    f(prefix + "ffn.b2", self.ffn.b2, ParamKind::Bias);
  }
};

struct EmbeddingParams {
  Mat patch_weight;    // (C * p * p) x d
  Mat patch_bias;      // 1 x d
  Mat class_token;     // 1 x d
  Mat spectrum_token;  // 1 x d
  Mat position;        // N x d

  static EmbeddingParams random(std::size_t patch_pixels, std::size_t d, std::size_t tokens, Rng& rng);

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "patch_weight", self.patch_weight, ParamKind::Weight);
    f(prefix + "patch_bias", self.patch_bias, ParamKind::Bias);
    f(prefix + "class_token", self.class_token, ParamKind::Embedding);
    f(prefix + "spectrum_token", self.spectrum_token, ParamKind::Embedding);
    f(prefix + "position", self.position, ParamKind::Embedding);
  }
};

/// Flattens non-overlapping patch_size x patch_size patches, one per row, in
/// raster order over the patch grid. Within a patch the layout is
/// channel-major, then row, then column. Throws std::invalid_argument if the
/// image is not divisible by patch_size.
Mat extract_patches(const Image& image, std::size_t patch_size);

/// Patch projection, [class]/[spectrum] tokens prepended, positions added.
TokenSequence embed(const Image& image, const EmbeddingParams& params, std::size_t patch_size);

template <class T>
struct DualHeadOutput {
  Matrix<T> o_s;        // modality-specific, N x d
  Matrix<T> o_i;        // modality-invariant, N x d
  Matrix<T> attention;  // A, N x N
  Matrix<T> values;     // V, N x d
};

/// Dual-head orthogonal attention evaluated literally: W is formed explicitly
/// (the identity pushed through every reflection) and split into its
/// top/bottom row halves.
template <class T>
DualHeadOutput<T> dual_head_attention(const Matrix<T>& z, const AttentionWeights<T>& w) {
  const std::size_t d = w.dim();
  if (z.cols() != d) throw std::invalid_argument("dual_head_attention: tokens have " + std::to_string(z.cols()) + " features, weights expect " + std::to_string(d));
  if (d % 2 != 0) throw std::invalid_argument("dual_head_attention: feature dimension must be even");
  const std::size_t h = d / 2;

  const auto q = add_row_broadcast(matmul(z, w.wq), w.bq);
  const auto k = add_row_broadcast(matmul(z, w.wk), w.bk);
  auto v = add_row_broadcast(matmul(z, w.wv), w.bv);
  auto scores = matmul_nt(q, k);
  scores *= static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  auto a = softmax_rows(scores);

  Matrix<T> v_s(z.rows(), h), v_i(z.rows(), h);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t c = 0; c < h; ++c) {
      v_s(r, c) = v(r, c);
      v_i(r, c) = v(r, h + c);
    }
  }
  const auto [w_top, w_bot] = split_rows(apply_right(Matrix<T>::identity(d), w.householder));
  DualHeadOutput<T> out;
  out.o_s = matmul(a, matmul(v_s, w_top));
  out.o_i = matmul(a, matmul(v_i, w_bot));
  out.attention = std::move(a);
  out.values = std::move(v);
  return out;
}

/// max |O_S O_I^T|, accumulated in double.
template <class T>
double cross_orthogonality(const Matrix<T>& o_s, const Matrix<T>& o_i) {
  return max_abs(matmul_nt(cast<double>(o_s), cast<double>(o_i)));
}

struct BlockOutput {
  Mat z_out;
  Mat o_s;
  Mat o_i;
};

/// Pre-norm residual block: Z' = Z + O_S + O_I (attention on LN1(Z)),
/// Z_out = Z' + FFN(LN2(Z')), FFN = linear -> GELU -> linear.
BlockOutput encoder_block(const Mat& z, const SaodBlockParams& params);

/// sigmoid(w . row + b) for the [spectrum] row of the final O_S.
double spectrum_head(std::span<const double> spectrum_row, const Mat& weight, double bias);

/// Binary cross-entropy against the modality (NIR = 0, VIS = 1).
double spectrum_loss(double score, Modality modality);

// Tape-building versions used for training.
namespace graph {

struct BlockVars {
  ad::Var z_out;
  ad::Var o_s;
  ad::Var o_i;
  ad::Var attention;
};

ad::Var embed(ad::Binder& bind, const Image& image, const EmbeddingParams& params, std::size_t patch_size);
BlockVars encoder_block(ad::Binder& bind, ad::Var z, const SaodBlockParams& params);

}  // namespace graph

}  // namespace nfer
