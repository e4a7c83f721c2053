#pragma once
// Hypergraph-guided feature embedding.
//
// The [class] embedding is mapped through N_v independent affine branches (one
// per AU vertex), an HGNN stack reduces the vertex features to one logit per
// vertex, and the sigmoid of that logit weights the branch sum fed to the
// expression classifier.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nfer/autodiff.hpp"
#include "nfer/hypergraph.hpp"
#include "nfer/matrix.hpp"
#include "nfer/params.hpp"
#include "nfer/rng.hpp"

namespace nfer {

struct HgfeParams {
  /// Branch i occupies columns [i*d0, (i+1)*d0) of the packed weight/bias.
  Mat branch_weight;  // d x (N_v * d0)
  Mat branch_bias;    // 1 x (N_v * d0)
  std::vector<Mat> thetas;  // d0 -> d1 -> ... -> 1
  Mat classifier_weight;    // d0 x M
  Mat classifier_bias;      // 1 x M

  std::size_t vertices() const;
  std::size_t branch_dim() const { return classifier_weight.rows(); }
  std::size_t classes() const { return classifier_weight.cols(); }
  std::size_t input_dim() const { return branch_weight.rows(); }

  /// Weight of FC_i as a d x d0 matrix.
  Mat branch_map(std::size_t i) const;
  void set_branch(std::size_t i, const Mat& weight, const Mat& bias);

  /// Throws std::invalid_argument unless the shapes are mutually consistent,
  /// layer widths are non-increasing and the last width is 1.
  void validate() const;

  /// `layer_dims` = {d0, d1, ..., 1}.
  static HgfeParams random(std::size_t d, std::size_t vertices, const std::vector<std::size_t>& layer_dims, std::size_t classes, Rng& rng);

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "branch_weight", self.branch_weight, ParamKind::Weight);
    f(prefix + "branch_bias", self.branch_bias, ParamKind::Bias);
    for (std::size_t l = 0; l < self.thetas.size(); ++l) f(prefix + "theta" + std::to_string(l), self.thetas[l], ParamKind::Weight);
    f(prefix + "classifier_weight", self.classifier_weight, ParamKind::Weight);
    f(prefix + "classifier_bias", self.classifier_bias, ParamKind::Bias);
  }
};

/// Row i = e_cls * W_i + b_i  (N_v x d0).
Mat decompose_branches(std::span<const double> e_cls, const HgfeParams& params);

/// sigmoid of the HGNN stack output, one weight per vertex.
std::vector<double> attention_weights(const Mat& branches, const Mat& propagation, const HgfeParams& params);
std::vector<double> attention_weights(const Mat& branches, const Hypergraph& g, const HgfeParams& params);

/// sum_i w_i * branches.row(i)
std::vector<double> aggregate(const Mat& branches, std::span<const double> weights);

/// E_agg * W_cls + b
std::vector<double> classify(std::span<const double> e_agg, const HgfeParams& params);

namespace graph {

struct HgfeVars {
  ad::Var branches;  // N_v x d0
  ad::Var weights;   // N_v x 1
  ad::Var e_agg;     // 1 x d0
  ad::Var logits;    // 1 x M
};

HgfeVars hgfe(ad::Binder& bind, ad::Var e_cls, const Mat& propagation, const HgfeParams& params);

}  // namespace graph

}  // namespace nfer
