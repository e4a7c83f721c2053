#include "nfer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "nfer/errors.hpp"
#include "nfer/log.hpp"
#include "nfer/rng.hpp"

namespace nfer {

namespace {

// Runs fn(i) for i in [0, n). Callers write results by index, so the
// partition never affects the outcome.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::uint64_t stream(std::uint64_t seed, std::uint64_t id, std::uint64_t index) { return Rng::derive(Rng::derive(seed, id), index); }

constexpr std::uint64_t kShuffleStream = 0x4000;

void check_model_fits(const TrainConfig& cfg, const Hypergraph& g, const Dataset& data) {
  if (data.classes() != g.edges()) {
    throw std::invalid_argument("dataset has " + std::to_string(data.classes()) + " classes, hypergraph has " + std::to_string(g.edges()) + " hyperedges");
  }
  cfg.validate();
}

}  // namespace

std::string to_jsonl(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"steps", r.steps},
                   {"lr", r.lr},
                   {"loss", r.loss},
                   {"classification_loss", r.classification_loss},
                   {"spectrum_loss", r.spectrum_loss},
                   {"train_accuracy", r.train_accuracy},
                   {"orthogonality_double", r.orthogonality_double},
                   {"orthogonality_single", r.orthogonality_single}};
  return j.dump();
}

SplitIndices split_indices(const TrainConfig& cfg, const Dataset& data) {
  SplitIndices s;
  switch (cfg.split) {
    case SplitMode::KFold:
      return split_indices(cfg, data, cfg.fold);
    case SplitMode::Holdout:
      for (std::size_t i = 0; i < data.size(); ++i) (data.samples[i].holdout ? s.test : s.train).push_back(i);
      if (s.test.empty()) throw ValidationError("holdout split: dataset has no holdout subjects");
      if (s.train.empty()) throw ValidationError("holdout split: every subject is held out");
      return s;
    case SplitMode::None:
      for (std::size_t i = 0; i < data.size(); ++i) s.train.push_back(i);
      s.test = s.train;
      return s;
  }
  return s;
}

SplitIndices split_indices(const TrainConfig& cfg, const Dataset& data, std::size_t fold) {
  const auto split = split_subject_kfold(data, cfg.folds, cfg.split_seed);
  if (fold >= split.k) throw std::invalid_argument("fold " + std::to_string(fold) + " out of range");
  return {split.train_indices(data, fold), split.test_indices(data, fold)};
}

OrthogonalityProbe probe_orthogonality(const Model& model, const Image& image) {
  OrthogonalityProbe probe;
  Mat z = embed(image, model.params.embedding, model.config.patch).z;
  for (const auto& block : model.params.blocks) {
    ad::Tape tape;
    ad::Binder bind(tape, false);
    const Mat zn = ad::layer_norm(bind.constant(z), bind(block.norm1.gamma), bind(block.norm1.beta)).value();

    const auto d = dual_head_attention(zn, block.attention);
    probe.double_precision = std::max(probe.double_precision, cross_orthogonality(d.o_s, d.o_i));

    AttentionWeights<float> wf;
    wf.wq = cast<float>(block.attention.wq);
    wf.wk = cast<float>(block.attention.wk);
    wf.wv = cast<float>(block.attention.wv);
    wf.bq = cast<float>(block.attention.bq);
    wf.bk = cast<float>(block.attention.bk);
    wf.bv = cast<float>(block.attention.bv);
    wf.householder = HouseholderStack<float>(block.dim(), cast<float>(block.attention.householder.vectors()));
    const auto f = dual_head_attention(cast<float>(zn), wf);
    probe.single_precision = std::max(probe.single_precision, cross_orthogonality(f.o_s, f.o_i));

    z = encoder_block(z, block).z_out;
  }
  return probe;
}

TrainResult train(const TrainConfig& cfg, const Hypergraph& g, const Dataset& data, const std::vector<std::size_t>& train_idx,
                  const EpochCallback& on_epoch) {
  check_model_fits(cfg, g, data);
  if (train_idx.empty()) throw ValidationError("train: no training samples");
  for (auto i : train_idx)
    if (i >= data.size()) throw std::invalid_argument("train: sample index out of range");

  TrainResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.model = Model::create(cfg.model, g, Rng::derive(cfg.seed, kInitStream));
  Model& model = result.checkpoint.model;
  AdamWState& opt = result.checkpoint.optimizer;

  const std::size_t n = train_idx.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches;
  const Image probe_image = preprocess(data.samples[train_idx.front()], cfg.model.image_size, false, 0).image;

  auto params = model.params.refs();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng shuffle(stream(cfg.seed, kShuffleStream, epoch));
    shuffle.shuffle(order.begin(), order.end());

    EpochRecord rec;
    rec.epoch = epoch + 1;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::vector<GradientResult> per_sample(end - begin);
      parallel_for(end - begin, cfg.threads, [&](std::size_t k) {
        const std::size_t idx = order[begin + k];
        const Sample s = preprocess(data.samples[idx], cfg.model.image_size, true, stream(cfg.seed, kCropStream + epoch, idx));
        per_sample[k] = gradients(model, s.image, s.expression, s.modality, cfg.lambda);
      });

      NferFormerParams sum = std::move(per_sample.front().grads);
      auto sum_refs = sum.refs();
      for (std::size_t k = 1; k < per_sample.size(); ++k) {
        const auto r = per_sample[k].grads.refs();
        for (std::size_t p = 0; p < r.size(); ++p) *sum_refs[p].value += *r[p].value;
      }
      const double inv = 1.0 / static_cast<double>(per_sample.size());
      for (auto& r : sum_refs) *r.value *= inv;
      for (std::size_t k = 0; k < per_sample.size(); ++k) {
        const auto& gr = per_sample[k];
        rec.loss += gr.loss.total;
        rec.classification_loss += gr.loss.classification;
        rec.spectrum_loss += gr.loss.spectrum;
        if (gr.output.prediction() == data.samples[order[begin + k]].expression) ++correct;
      }

      const std::size_t step = epoch * batches + b;
      rec.lr = lr_schedule(step, total_steps, cfg.lr, cfg.schedule);
      std::vector<ConstParamRef> grads;
      for (const auto& r : sum_refs) grads.push_back({r.name, r.value, r.kind});
      try {
        optimizer_step(params, grads, opt, rec.lr, cfg.adamw);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step) + ": " + e.what());
      }
    }
    rec.steps = opt.step;
    rec.loss /= static_cast<double>(n);
    rec.classification_loss /= static_cast<double>(n);
    rec.spectrum_loss /= static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (!std::isfinite(rec.loss)) throw NumericError("epoch " + std::to_string(epoch + 1) + ": loss diverged");
    const auto probe = probe_orthogonality(model, probe_image);
    rec.orthogonality_double = probe.double_precision;
    rec.orthogonality_single = probe.single_precision;
    logger().info("epoch {:3d} loss {:.5f} (cls {:.5f}, spectrum {:.5f}) acc {:.4f} lr {:.3g} ortho {:.2e}/{:.2e}", rec.epoch, rec.loss,
                  rec.classification_loss, rec.spectrum_loss, rec.train_accuracy, rec.lr, rec.orthogonality_double, rec.orthogonality_single);
    result.log.push_back(rec);
    result.checkpoint.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

std::vector<Prediction> predict(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices, std::optional<Modality> modality,
                                std::size_t threads) {
  std::vector<std::size_t> chosen;
  for (auto i : indices) {
    if (i >= data.size()) throw std::invalid_argument("predict: sample index out of range");
    if (!modality || data.samples[i].modality == *modality) chosen.push_back(i);
  }
  std::vector<Prediction> out(chosen.size());
  parallel_for(chosen.size(), threads, [&](std::size_t k) {
    const auto& src = data.samples[chosen[k]];
    const Sample s = preprocess(src, model.config.image_size, false, 0);
    const auto f = forward(model, s.image);
    out[k] = {chosen[k], f.prediction(), src.expression, f.spectrum_score};
  });
  return out;
}

MetricsReport evaluate(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices, std::optional<Modality> modality,
                       std::size_t threads) {
  const auto preds = predict(model, data, indices, modality, threads);
  if (preds.empty()) {
    throw ValidationError(std::string("evaluate: no samples") + (modality ? std::string(" with modality ") + modality_name(*modality) : std::string()));
  }
  std::vector<std::size_t> p, t;
  for (const auto& x : preds) {
    p.push_back(x.predicted);
    t.push_back(x.truth);
  }
  return compute_metrics(p, t, model.classes());
}

CvReport run_cv(const TrainConfig& cfg, const Hypergraph& g, const Dataset& data, const std::vector<std::size_t>& folds_to_run) {
  check_model_fits(cfg, g, data);
  if (cfg.folds < 2) throw std::invalid_argument("run_cv: need at least 2 folds");
  const auto split = split_subject_kfold(data, cfg.folds, cfg.split_seed);
  std::vector<std::size_t> folds = folds_to_run;
  if (folds.empty())
    for (std::size_t f = 0; f < cfg.folds; ++f) folds.push_back(f);

  CvReport report;
  std::vector<double> acc, f1;
  for (auto f : folds) {
    if (f >= cfg.folds) throw std::invalid_argument("run_cv: fold " + std::to_string(f) + " out of range");
    TrainConfig fc = cfg;
    fc.seed = Rng::derive(cfg.seed, kFoldStream + f);
    const auto train_idx = split.train_indices(data, f);
    const auto test_idx = split.test_indices(data, f);
    auto trained = train(fc, g, data, train_idx);
    FoldResult fr;
    fr.fold = f;
    fr.train_samples = train_idx.size();
    fr.test_samples = test_idx.size();
    fr.metrics = evaluate(trained.checkpoint.model, data, test_idx, cfg.eval_modality, cfg.threads);
    logger().info("fold {} accuracy {:.4f} macro-F1 {:.4f}", f, fr.metrics.accuracy, fr.metrics.macro_f1);
    acc.push_back(fr.metrics.accuracy);
    f1.push_back(fr.metrics.macro_f1);
    report.folds.push_back(std::move(fr));
  }
  report.accuracy = summarize(acc);
  report.macro_f1 = summarize(f1);
  return report;
}

void write_cv_csv(std::ostream& out, const CvReport& r) {
  out << "fold,train_samples,test_samples,accuracy,macro_f1\n";
  for (const auto& f : r.folds) {
    out << f.fold << "," << f.train_samples << "," << f.test_samples << "," << format_double(f.metrics.accuracy) << "," << format_double(f.metrics.macro_f1)
        << "\n";
  }
  out << "mean,,," << format_double(r.accuracy.mean) << "," << format_double(r.macro_f1.mean) << "\n";
  out << "std,,," << format_double(r.accuracy.stddev) << "," << format_double(r.macro_f1.stddev) << "\n";
}

void export_features(std::ostream& out, const Model& model, const Dataset& data, const std::vector<std::size_t>& indices, FeatureKind which) {
  const std::size_t width = which == FeatureKind::ClassEmbedding ? model.config.dim : model.params.hgfe.branch_dim();
  out << "index,modality,expression,subject";
  for (std::size_t k = 0; k < width; ++k) out << ",f" << k;
  out << "\n";
  for (auto i : indices) {
    if (i >= data.size()) throw std::invalid_argument("export_features: sample index out of range");
    const auto& src = data.samples[i];
    const auto f = forward(model, preprocess(src, model.config.image_size, false, 0).image);
    const auto& feat = which == FeatureKind::ClassEmbedding ? f.e_cls : f.e_agg;
    out << i << "," << modality_name(src.modality) << "," << src.expression << "," << src.subject;
    for (double x : feat) out << "," << format_double(x);
    out << "\n";
  }
}

std::vector<SweepRow> lambda_sweep(const TrainConfig& cfg, const Hypergraph& g, const Dataset& data, const std::vector<double>& lambdas) {
  if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: no lambda values");
  const auto split = split_indices(cfg, data);
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    TrainConfig c = cfg;
    c.lambda = l;
    auto trained = train(c, g, data, split.train);
    rows.push_back({l, evaluate(trained.checkpoint.model, data, split.test, cfg.eval_modality, cfg.threads)});
    logger().info("lambda {} accuracy {:.4f}", l, rows.back().metrics.accuracy);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "lambda,accuracy,macro_f1,samples\n";
  for (const auto& r : rows) out << format_double(r.lambda) << "," << format_double(r.metrics.accuracy) << "," << format_double(r.metrics.macro_f1) << "," << r.metrics.count << "\n";
}

}  // namespace nfer
