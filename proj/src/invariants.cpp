#include "nfer/invariants.hpp"

#include <algorithm>
#include <cmath>

#include "nfer/householder.hpp"
#include "nfer/rng.hpp"
#include "nfer/saod.hpp"

namespace nfer {

bool InvariantReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const InvariantCheck& c) { return c.passed; });
}

namespace {

void record(InvariantCheck& c, double value) {
  ++c.trials;
  c.worst = std::max(c.worst, value);
  if (!(value <= c.tolerance)) c.passed = false;
}

}  // namespace

InvariantReport check_attention_invariants(std::size_t draws, std::uint64_t seed) {
  static constexpr std::size_t kDims[] = {4, 8, 64};
  static constexpr std::size_t kTokens[] = {3, 10, 50};
  InvariantCheck cross_d{"cross-orthogonality (double)", 0, 0, 1e-10, true};
  InvariantCheck cross_f{"cross-orthogonality (single)", 0, 0, 1e-5, true};
  InvariantCheck complete{"decomposition completeness", 0, 0, 1e-10, true};
  InvariantCheck ortho{"W orthogonality", 0, 0, 1e-10, true};
  InvariantCheck iso{"isometry", 0, 0, 1e-10, true};

  for (std::size_t t = 0; t < draws; ++t) {
    Rng rng(Rng::derive(seed, t));
    const std::size_t d = kDims[t % 3];
    const std::size_t n = kTokens[(t / 3) % 3];
    auto w = AttentionWeights<double>::random(d, rng, 1.0 / std::sqrt(static_cast<double>(d)), d);
    w.bq = rng.normal_matrix(1, d, 0.1);
    w.bk = rng.normal_matrix(1, d, 0.1);
    w.bv = rng.normal_matrix(1, d, 0.1);
    const Mat z = rng.normal_matrix(n, d);

    const auto out = dual_head_attention(z, w);
    record(cross_d, cross_orthogonality(out.o_s, out.o_i));
    const Mat wm = materialize(w.householder);
    Mat sum = out.o_s;
    sum += out.o_i;
    record(complete, max_abs_diff(sum, matmul(out.attention, matmul(out.values, wm))));
    record(ortho, orthogonality_residual(wm));
    const Mat xw = apply_right(z, w.householder);
    double worst_iso = 0;
    for (std::size_t r = 0; r < n; ++r) {
      double a = 0, b = 0;
      for (std::size_t c = 0; c < d; ++c) {
        a += z(r, c) * z(r, c);
        b += xw(r, c) * xw(r, c);
      }
      worst_iso = std::max(worst_iso, std::abs(std::sqrt(a) - std::sqrt(b)));
    }
    record(iso, worst_iso);

    AttentionWeights<float> wf;
    wf.wq = cast<float>(w.wq);
    wf.wk = cast<float>(w.wk);
    wf.wv = cast<float>(w.wv);
    wf.bq = cast<float>(w.bq);
    wf.bk = cast<float>(w.bk);
    wf.bv = cast<float>(w.bv);
    wf.householder = HouseholderStack<float>(d, cast<float>(w.householder.vectors()));
    const auto of = dual_head_attention(cast<float>(z), wf);
    record(cross_f, cross_orthogonality(of.o_s, of.o_i));
  }
  return InvariantReport{{cross_d, cross_f, complete, ortho, iso}};
}

ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.channels = 1;
  c.image_size = 2;
  c.patch = 2;
  c.dim = 4;
  c.depth = 1;
  c.ffn_ratio = 4;
  c.reflections = 0;
  c.hgnn_dims = {2, 2, 1};
  return c;
}

Hypergraph gradcheck_hypergraph() {
  return load_incidence(
      "format: matrix\n"
      "edges: e0 e1 e2\n"
      "v0: 1 0 1\n"
      "v1: 1 1 0\n"
      "v2: 0 1 1\n");
}

GradCheckReport model_grad_check(Model model, const Image& image, std::size_t expression, Modality modality, double lambda, double eps,
                                 double tolerance) {
  const auto analytic = gradients(model, image, expression, modality, lambda).grads;
  auto values = model.params.refs();
  const auto grads = analytic.refs();
  std::vector<GradCheckGroup> groups;
  for (std::size_t i = 0; i < values.size(); ++i) groups.push_back({values[i].name, values[i].value->flat(), grads[i].value->flat()});
  auto loss = [&] { return joint_loss(forward(model, image), expression, modality, lambda).total; };
  return grad_check(loss, std::move(groups), eps, tolerance);
}

InvariantReport run_invariant_checks(std::size_t draws, std::uint64_t seed) {
  auto report = check_attention_invariants(draws, seed);
  const auto cfg = gradcheck_model_config();
  const auto model = Model::create(cfg, gradcheck_hypergraph(), Rng::derive(seed, 0xC0DE));
  Image img(1, 2, 2);
  Rng rng(Rng::derive(seed, 0xF00D));
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  const auto gc = model_grad_check(model, img, 1, Modality::VIS, 0.1);
  InvariantCheck g{"full-model gradient check", 0, gc.max_rel_error, 1e-4, gc.passed};
  for (const auto& grp : gc.groups) g.trials += grp.count;
  report.checks.push_back(g);
  return report;
}

}  // namespace nfer
