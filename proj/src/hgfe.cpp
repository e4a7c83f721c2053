#include "nfer/hgfe.hpp"

#include <cmath>
#include <stdexcept>

#include "nfer/numerics.hpp"

namespace nfer {

std::size_t HgfeParams::vertices() const { return branch_dim() == 0 ? 0 : branch_weight.cols() / branch_dim(); }

Mat HgfeParams::branch_map(std::size_t i) const {
  const std::size_t d0 = branch_dim();
  Mat w(input_dim(), d0);
  for (std::size_t r = 0; r < input_dim(); ++r)
    for (std::size_t c = 0; c < d0; ++c) w(r, c) = branch_weight(r, i * d0 + c);
  return w;
}

void HgfeParams::set_branch(std::size_t i, const Mat& weight, const Mat& bias) {
  const std::size_t d0 = branch_dim();
  if (weight.rows() != input_dim() || weight.cols() != d0 || bias.rows() != 1 || bias.cols() != d0) {
    throw std::invalid_argument("set_branch: expected " + std::to_string(input_dim()) + "x" + std::to_string(d0) + " weight and 1x" + std::to_string(d0) + " bias");
  }
  for (std::size_t r = 0; r < input_dim(); ++r)
    for (std::size_t c = 0; c < d0; ++c) branch_weight(r, i * d0 + c) = weight(r, c);
  for (std::size_t c = 0; c < d0; ++c) branch_bias(0, i * d0 + c) = bias(0, c);
}

void HgfeParams::validate() const {
  const std::size_t d0 = branch_dim();
  if (d0 == 0 || branch_weight.cols() % d0 != 0) throw std::invalid_argument("hgfe: branch width is not a multiple of d0");
  if (branch_bias.rows() != 1 || branch_bias.cols() != branch_weight.cols()) throw std::invalid_argument("hgfe: branch bias shape");
  if (thetas.empty()) throw std::invalid_argument("hgfe: HGNN stack is empty");
  std::size_t width = d0;
  for (std::size_t l = 0; l < thetas.size(); ++l) {
    if (thetas[l].rows() != width) throw std::invalid_argument("hgfe: theta" + std::to_string(l) + " expects " + std::to_string(thetas[l].rows()) + " inputs, got " + std::to_string(width));
    if (thetas[l].cols() > width) throw std::invalid_argument("hgfe: layer widths must be non-increasing");
    width = thetas[l].cols();
  }
  if (width != 1) throw std::invalid_argument("hgfe: last HGNN layer must have width 1");
  if (classifier_bias.rows() != 1 || classifier_bias.cols() != classifier_weight.cols()) throw std::invalid_argument("hgfe: classifier bias shape");
}

HgfeParams HgfeParams::random(std::size_t d, std::size_t vertices, const std::vector<std::size_t>& layer_dims, std::size_t classes, Rng& rng) {
  if (layer_dims.size() < 2) throw std::invalid_argument("hgfe: need at least {d0, 1} layer dims");
  HgfeParams p;
  const std::size_t d0 = layer_dims.front();
  p.branch_weight = rng.normal_matrix(d, vertices * d0, 1.0 / std::sqrt(static_cast<double>(d)));
  p.branch_bias = Mat(1, vertices * d0);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    p.thetas.push_back(rng.normal_matrix(layer_dims[l], layer_dims[l + 1], 1.0 / std::sqrt(static_cast<double>(layer_dims[l]))));
  }
  p.classifier_weight = rng.normal_matrix(d0, classes, 1.0 / std::sqrt(static_cast<double>(d0)));
  p.classifier_bias = Mat(1, classes);
  p.validate();
  return p;
}

Mat decompose_branches(std::span<const double> e_cls, const HgfeParams& params) {
  if (e_cls.size() != params.input_dim()) {
    throw std::invalid_argument("decompose_branches: embedding has " + std::to_string(e_cls.size()) + " features, branches expect " + std::to_string(params.input_dim()));
  }
  Mat flat = add_row_broadcast(matmul(Mat::row_vector(e_cls), params.branch_weight), params.branch_bias);
  return Mat(params.vertices(), params.branch_dim(), std::vector<double>(flat.flat().begin(), flat.flat().end()));
}

std::vector<double> attention_weights(const Mat& branches, const Mat& propagation, const HgfeParams& params) {
  Mat e = branches;
  for (std::size_t l = 0; l < params.thetas.size(); ++l) e = hgnn_conv(e, propagation, params.thetas[l], l + 1 == params.thetas.size());
  std::vector<double> w(e.rows());
  for (std::size_t i = 0; i < e.rows(); ++i) w[i] = sigmoid(e(i, 0));
  return w;
}

std::vector<double> attention_weights(const Mat& branches, const Hypergraph& g, const HgfeParams& params) {
  return attention_weights(branches, propagation_matrix(g), params);
}

std::vector<double> aggregate(const Mat& branches, std::span<const double> weights) {
  if (weights.size() != branches.rows()) {
    throw std::invalid_argument("aggregate: " + std::to_string(weights.size()) + " weights for " + std::to_string(branches.rows()) + " branches");
  }
  std::vector<double> out(branches.cols(), 0.0);
  for (std::size_t i = 0; i < branches.rows(); ++i) kernels::axpy(out.data(), weights[i], branches.row(i).data(), out.size());
  return out;
}

std::vector<double> classify(std::span<const double> e_agg, const HgfeParams& params) {
  if (e_agg.size() != params.branch_dim()) throw std::invalid_argument("classify: feature length does not match classifier");
  Mat logits = add_row_broadcast(matmul(Mat::row_vector(e_agg), params.classifier_weight), params.classifier_bias);
  return {logits.flat().begin(), logits.flat().end()};
}

namespace graph {

HgfeVars hgfe(ad::Binder& bind, ad::Var e_cls, const Mat& propagation, const HgfeParams& params) {
  const std::size_t nv = params.vertices();
  auto flat = ad::add_row(ad::matmul(e_cls, bind(params.branch_weight)), bind(params.branch_bias));
  auto branches = ad::reshape(flat, nv, params.branch_dim());
  auto prop = bind.constant(propagation);
  ad::Var e = branches;
  for (std::size_t l = 0; l < params.thetas.size(); ++l) {
    e = ad::matmul(prop, ad::matmul(e, bind(params.thetas[l])));
    if (l + 1 < params.thetas.size()) e = ad::relu(e);
  }
  auto w = ad::sigmoid(e);
  auto e_agg = ad::matmul_tn(w, branches);
  auto logits = ad::add_row(ad::matmul(e_agg, bind(params.classifier_weight)), bind(params.classifier_bias));
  return HgfeVars{branches, w, e_agg, logits};
}

}  // namespace graph

}  // namespace nfer
