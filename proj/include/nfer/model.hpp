#pragma once
// Full network: patch embedding -> orthogonally decomposed encoder blocks ->
// spectrum head on the final O_S [spectrum] row and hypergraph-guided
// expression head on the final O_I [class] row.

#include <cstddef>
#include <string>
#include <vector>

#include "nfer/hgfe.hpp"
#include "nfer/hypergraph.hpp"
#include "nfer/image.hpp"
#include "nfer/params.hpp"
#include "nfer/saod.hpp"

namespace nfer {

struct ModelConfig {
  std::size_t channels = 1;
  std::size_t image_size = 32;
  std::size_t patch = 4;
  std::size_t dim = 64;
  std::size_t depth = 4;
  std::size_t ffn_ratio = 4;
  /// Householder reflections per block; 0 means `dim`.
  std::size_t reflections = 0;
  /// HGNN widths d0 -> ... -> 1.
  std::vector<std::size_t> hgnn_dims{64, 16, 1};

  std::size_t tokens() const { return kSpecialTokens + (image_size / patch) * (image_size / patch); }
  std::size_t reflection_count() const { return reflections == 0 ? dim : reflections; }
  std::size_t patch_pixels() const { return channels * patch * patch; }

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct NferFormerParams {
  EmbeddingParams embedding;
  std::vector<SaodBlockParams> blocks;
  LayerNormParams final_norm;
  Mat spectrum_weight;  // 1 x d
  Mat spectrum_bias;    // 1 x 1
  HgfeParams hgfe;

  static NferFormerParams random(const ModelConfig& cfg, std::size_t vertices, std::size_t classes, Rng& rng);

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    EmbeddingParams::visit(self.embedding, "embed.", f);
    for (std::size_t b = 0; b < self.blocks.size(); ++b) SaodBlockParams::visit(self.blocks[b], "block" + std::to_string(b) + ".", f);
    f(std::string("final_norm.gamma"), self.final_norm.gamma, ParamKind::Norm);
    f(std::string("final_norm.beta"), self.final_norm.beta, ParamKind::Norm);
    f(std::string("spectrum.weight"), self.spectrum_weight, ParamKind::Weight);
    f(std::string("spectrum.bias"), self.spectrum_bias, ParamKind::Bias);
    HgfeParams::visit(self.hgfe, "hgfe.", f);
  }

  std::vector<ParamRef> refs();
  std::vector<ConstParamRef> refs() const;
  /// Same structure, all entries zero.
  NferFormerParams zeros_like() const;
  std::size_t scalar_count() const;
};

struct Model {
  ModelConfig config;
  Hypergraph hypergraph;
  Mat propagation;
  NferFormerParams params;

  static Model create(const ModelConfig& cfg, Hypergraph g, std::uint64_t seed);
  /// Recomputes `propagation` after the hypergraph changes.
  void refresh();
  std::size_t classes() const { return hypergraph.edges(); }
};

struct ForwardOutput {
  std::vector<double> logits;  // M
  double spectrum_score = 0.5;
  std::vector<double> e_cls;   // normalized [class] row of the final O_I
  std::vector<double> e_agg;   // d0
  std::vector<double> vertex_weights;
  Mat o_s;  // final block
  Mat o_i;

  /// argmax of logits, lowest index on ties.
  std::size_t prediction() const;
};

ForwardOutput forward(const Model& model, const Image& image);

struct LossParts {
  double total = 0;
  double classification = 0;
  double spectrum = 0;
};

/// L = CE(logits, y) + lambda * BCE(score, l). Throws std::invalid_argument on
/// a bad label or negative lambda.
LossParts joint_loss(const ForwardOutput& out, std::size_t expression, Modality modality, double lambda);

struct GradientResult {
  NferFormerParams grads;
  LossParts loss;
  ForwardOutput output;
};

/// Loss and its gradient with respect to every parameter. Throws NumericError
/// if the loss is not finite.
GradientResult gradients(const Model& model, const Image& image, std::size_t expression, Modality modality, double lambda);

namespace graph {

struct ForwardVars {
  std::vector<BlockVars> blocks;
  ad::Var spectrum_row;  // after final norm
  ad::Var class_row;     // after final norm
  ad::Var score;
  HgfeVars hgfe;
};

ForwardVars forward(ad::Binder& bind, const Model& model, const Image& image);
ad::Var joint_loss(const ForwardVars& f, std::size_t expression, Modality modality, double lambda);

}  // namespace graph

}  // namespace nfer
