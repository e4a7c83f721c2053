#include "nfer/saod.hpp"

#include <cmath>

namespace nfer {

SaodBlockParams SaodBlockParams::random(std::size_t d, std::size_t ffn_hidden, std::size_t reflections, Rng& rng) {
  SaodBlockParams p;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  p.norm1 = LayerNormParams::identity(d);
  p.attention = AttentionWeights<double>::random(d, rng, sd, reflections);
  p.norm2 = LayerNormParams::identity(d);
  p.ffn.w1 = rng.normal_matrix(d, ffn_hidden, sd);
  p.ffn.b1 = Mat(1, ffn_hidden);
  p.ffn.w2 = rng.normal_matrix(ffn_hidden, d, 1.0 / std::sqrt(static_cast<double>(ffn_hidden)));
  p.ffn.b2 = Mat(1, d);
  return p;
}

EmbeddingParams EmbeddingParams::random(std::size_t patch_pixels, std::size_t d, std::size_t tokens, Rng& rng) {
  EmbeddingParams e;
  e.patch_weight = rng.normal_matrix(patch_pixels, d, 1.0 / std::sqrt(static_cast<double>(patch_pixels)));
  e.patch_bias = Mat(1, d);
  e.class_token = rng.normal_matrix(1, d, 0.02);
  e.spectrum_token = rng.normal_matrix(1, d, 0.02);
  e.position = rng.normal_matrix(tokens, d, 0.02);
  return e;
}

Mat extract_patches(const Image& image, std::size_t patch_size) {
  if (patch_size == 0 || image.height % patch_size != 0 || image.width % patch_size != 0) {
    throw std::invalid_argument("embed: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                                " is not divisible by patch size " + std::to_string(patch_size));
  }
  const std::size_t gh = image.height / patch_size, gw = image.width / patch_size;
  const std::size_t pp = patch_size * patch_size;
  Mat patches(gh * gw, image.channels * pp);
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      auto row = patches.row(py * gw + px);
      for (std::size_t c = 0; c < image.channels; ++c)
        for (std::size_t dy = 0; dy < patch_size; ++dy)
          for (std::size_t dx = 0; dx < patch_size; ++dx)
            row[c * pp + dy * patch_size + dx] = image.at(c, py * patch_size + dy, px * patch_size + dx);
    }
  }
  return patches;
}

TokenSequence embed(const Image& image, const EmbeddingParams& params, std::size_t patch_size) {
  ad::Tape tape;
  ad::Binder bind(tape, false);
  return TokenSequence{graph::embed(bind, image, params, patch_size).value()};
}

BlockOutput encoder_block(const Mat& z, const SaodBlockParams& params) {
  ad::Tape tape;
  ad::Binder bind(tape, false);
  auto out = graph::encoder_block(bind, tape.constant(z), params);
  return BlockOutput{out.z_out.value(), out.o_s.value(), out.o_i.value()};
}

double spectrum_head(std::span<const double> spectrum_row, const Mat& weight, double bias) {
  if (weight.size() != spectrum_row.size()) throw std::invalid_argument("spectrum_head: weight length does not match features");
  return sigmoid(kernels::dot(weight.data(), spectrum_row.data(), spectrum_row.size()) + bias);
}

double spectrum_loss(double score, Modality modality) { return binary_cross_entropy(score, static_cast<int>(modality)); }

namespace graph {

ad::Var embed(ad::Binder& bind, const Image& image, const EmbeddingParams& params, std::size_t patch_size) {
  Mat patches = extract_patches(image, patch_size);
  if (patches.cols() != params.patch_weight.rows()) {
    throw std::invalid_argument("embed: patch has " + std::to_string(patches.cols()) + " pixels, projection expects " +
                                std::to_string(params.patch_weight.rows()));
  }
  if (params.position.rows() != patches.rows() + kSpecialTokens) {
    throw std::invalid_argument("embed: positional table has " + std::to_string(params.position.rows()) + " rows for " +
                                std::to_string(patches.rows() + kSpecialTokens) + " tokens");
  }
  auto tokens = ad::add_row(ad::matmul(bind.constant(std::move(patches)), bind(params.patch_weight)), bind(params.patch_bias));
  auto z = ad::concat_rows({bind(params.class_token), bind(params.spectrum_token), tokens});
  return ad::add(z, bind(params.position));
}

BlockVars encoder_block(ad::Binder& bind, ad::Var z, const SaodBlockParams& p) {
  const std::size_t d = p.dim();
  if (z.cols() != d) throw std::invalid_argument("encoder_block: tokens have " + std::to_string(z.cols()) + " features, block expects " + std::to_string(d));
  const std::size_t h = d / 2;
  const auto& at = p.attention;

  auto x = ad::layer_norm(z, bind(p.norm1.gamma), bind(p.norm1.beta));
  auto q = ad::add_row(ad::matmul(x, bind(at.wq)), bind(at.bq));
  auto k = ad::add_row(ad::matmul(x, bind(at.wk)), bind(at.bk));
  auto v = ad::add_row(ad::matmul(x, bind(at.wv)), bind(at.bv));
  auto a = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))));

  // [V_S, 0] W = V_S W_top and [0, V_I] W = V_I W_bot.
  auto hv = bind(at.householder.vectors());
  const double guard = at.householder.norm_guard();
  auto vs = ad::householder_apply(ad::mask_cols(v, 0, h), hv, guard);
  auto vi = ad::householder_apply(ad::mask_cols(v, h, d), hv, guard);
  auto o_s = ad::matmul(a, vs);
  auto o_i = ad::matmul(a, vi);

  auto z1 = ad::add(z, ad::add(o_s, o_i));
  auto x2 = ad::layer_norm(z1, bind(p.norm2.gamma), bind(p.norm2.beta));
  auto hidden = ad::gelu(ad::add_row(ad::matmul(x2, bind(p.ffn.w1)), bind(p.ffn.b1)));
  auto ff = ad::add_row(ad::matmul(hidden, bind(p.ffn.w2)), bind(p.ffn.b2));
  return BlockVars{ad::add(z1, ff), o_s, o_i, a};
}

}  // namespace graph

}  // namespace nfer
