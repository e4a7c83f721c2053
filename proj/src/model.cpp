#include "nfer/model.hpp"

#include <cmath>
#include <stdexcept>

#include "nfer/errors.hpp"
#include "nfer/numerics.hpp"

namespace nfer {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (channels == 0) fail("channels must be positive");
  if (patch == 0 || image_size == 0 || image_size % patch != 0) fail("image_size must be a positive multiple of patch");
  if (dim == 0 || dim % 2 != 0) fail("dim must be a positive even integer");
  if (depth == 0) fail("depth must be at least 1");
  if (ffn_ratio == 0) fail("ffn_ratio must be positive");
  if (reflections > dim) fail("reflections must not exceed dim");
  if (hgnn_dims.size() < 2) fail("hgnn_dims needs at least two entries (d0 ... 1)");
  if (hgnn_dims.back() != 1) fail("last hgnn width must be 1");
  for (std::size_t i = 0; i + 1 < hgnn_dims.size(); ++i)
    if (hgnn_dims[i + 1] > hgnn_dims[i]) fail("hgnn widths must be non-increasing");
  if (hgnn_dims.front() == 0) fail("d0 must be positive");
}

NferFormerParams NferFormerParams::random(const ModelConfig& cfg, std::size_t vertices, std::size_t classes, Rng& rng) {
  cfg.validate();
  NferFormerParams p;
  p.embedding = EmbeddingParams::random(cfg.patch_pixels(), cfg.dim, cfg.tokens(), rng);
  for (std::size_t b = 0; b < cfg.depth; ++b) p.blocks.push_back(SaodBlockParams::random(cfg.dim, cfg.dim * cfg.ffn_ratio, cfg.reflection_count(), rng));
  p.final_norm = LayerNormParams::identity(cfg.dim);
  p.spectrum_weight = rng.normal_matrix(1, cfg.dim, 1.0 / std::sqrt(static_cast<double>(cfg.dim)));
  p.spectrum_bias = Mat(1, 1);
  p.hgfe = HgfeParams::random(cfg.dim, vertices, cfg.hgnn_dims, classes, rng);
  return p;
}

std::vector<ParamRef> NferFormerParams::refs() {
  std::vector<ParamRef> out;
  visit(*this, [&](const std::string& name, Mat& m, ParamKind k) { out.push_back({name, &m, k}); });
  return out;
}

std::vector<ConstParamRef> NferFormerParams::refs() const {
  std::vector<ConstParamRef> out;
  visit(*this, [&](const std::string& name, const Mat& m, ParamKind k) { out.push_back({name, &m, k}); });
  return out;
}

NferFormerParams NferFormerParams::zeros_like() const {
  NferFormerParams z = *this;
  visit(z, [](const std::string&, Mat& m, ParamKind) { m.fill(0.0); });
  return z;
}

std::size_t NferFormerParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& r : refs()) n += r.value->size();
  return n;
}

Model Model::create(const ModelConfig& cfg, Hypergraph g, std::uint64_t seed) {
  Rng rng(seed);
  Model m;
  m.config = cfg;
  m.hypergraph = std::move(g);
  m.params = NferFormerParams::random(cfg, m.hypergraph.vertices(), m.hypergraph.edges(), rng);
  m.refresh();
  return m;
}

void Model::refresh() { propagation = propagation_matrix(hypergraph); }

std::size_t ForwardOutput::prediction() const { return argmax(logits); }

namespace graph {

ForwardVars forward(ad::Binder& bind, const Model& model, const Image& image) {
  const auto& cfg = model.config;
  if (image.channels != cfg.channels || image.height != cfg.image_size || image.width != cfg.image_size) {
    throw std::invalid_argument("forward: image is " + std::to_string(image.channels) + "x" + std::to_string(image.height) + "x" +
                                std::to_string(image.width) + ", model expects " + std::to_string(cfg.channels) + "x" +
                                std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  }
  const auto& p = model.params;
  ForwardVars f;
  ad::Var z = embed(bind, image, p.embedding, cfg.patch);
  for (const auto& block : p.blocks) {
    f.blocks.push_back(encoder_block(bind, z, block));
    z = f.blocks.back().z_out;
  }
  const auto& last = f.blocks.back();
  auto gamma = bind(p.final_norm.gamma);
  auto beta = bind(p.final_norm.beta);
  f.spectrum_row = ad::layer_norm(ad::select_row(last.o_s, kSpectrumRow), gamma, beta);
  f.class_row = ad::layer_norm(ad::select_row(last.o_i, kClassRow), gamma, beta);
  f.score = ad::sigmoid(ad::add(ad::matmul_nt(f.spectrum_row, bind(p.spectrum_weight)), bind(p.spectrum_bias)));
  f.hgfe = hgfe(bind, f.class_row, model.propagation, p.hgfe);
  return f;
}

ad::Var joint_loss(const ForwardVars& f, std::size_t expression, Modality modality, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("joint_loss: lambda must be non-negative");
  auto cls = ad::cross_entropy(f.hgfe.logits, expression);
  auto spec = ad::binary_cross_entropy(f.score, static_cast<int>(modality));
  return ad::add(cls, ad::scale(spec, lambda));
}

}  // namespace graph

namespace {

std::vector<double> row0(const Mat& m) { return {m.flat().begin(), m.flat().end()}; }

ForwardOutput collect(const graph::ForwardVars& f) {
  ForwardOutput out;
  out.logits = row0(f.hgfe.logits.value());
  out.spectrum_score = f.score.value()(0, 0);
  out.e_cls = row0(f.class_row.value());
  out.e_agg = row0(f.hgfe.e_agg.value());
  out.vertex_weights = row0(f.hgfe.weights.value());
  out.o_s = f.blocks.back().o_s.value();
  out.o_i = f.blocks.back().o_i.value();
  return out;
}

}  // namespace

ForwardOutput forward(const Model& model, const Image& image) {
  ad::Tape tape;
  ad::Binder bind(tape, false);
  return collect(graph::forward(bind, model, image));
}

LossParts joint_loss(const ForwardOutput& out, std::size_t expression, Modality modality, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("joint_loss: lambda must be non-negative");
  LossParts l;
  l.classification = cross_entropy_loss(out.logits, expression);
  l.spectrum = binary_cross_entropy(out.spectrum_score, static_cast<int>(modality));
  l.total = l.classification + lambda * l.spectrum;
  return l;
}

GradientResult gradients(const Model& model, const Image& image, std::size_t expression, Modality modality, double lambda) {
  ad::Tape tape;
  ad::Binder bind(tape, true);
  auto f = graph::forward(bind, model, image);
  auto loss = graph::joint_loss(f, expression, modality, lambda);
  GradientResult r;
  r.output = collect(f);
  r.loss = joint_loss(r.output, expression, modality, lambda);
  if (!std::isfinite(loss.value()(0, 0))) throw NumericError("gradients: non-finite loss");
  tape.backward(loss);
  r.grads = model.params.zeros_like();
  auto src = model.params.refs();
  auto dst = r.grads.refs();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = bind.gradient(*src[i].value);
  return r;
}

}  // namespace nfer
