#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "nfer/checkpoint.hpp"
#include "nfer/config.hpp"
#include "nfer/errors.hpp"
#include "nfer/metrics.hpp"
#include "nfer/optim.hpp"
#include "nfer/trainer.hpp"
#include "support.hpp"

namespace nfer {
namespace {

// ---------------------------------------------------------------- optimizer

TEST(AdamW, FirstStepHandCase) {
  Mat w{{1.0}}, b{{1.0}};
  const Mat gw{{0.5}}, gb{{-0.2}};
  std::vector<ParamRef> p{{"w", &w, ParamKind::Weight}, {"b", &b, ParamKind::Bias}};
  std::vector<ConstParamRef> g{{"w", &gw, ParamKind::Weight}, {"b", &gb, ParamKind::Bias}};
  AdamWState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  optimizer_step(p, g, st, 0.1, cfg);
  // m_hat = g, v_hat = g^2 after one bias-corrected step.
  EXPECT_NEAR(w(0, 0), 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(b(0, 0), 1.0 + 0.1 * 0.2 / (0.2 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1u);

  optimizer_step(p, g, st, 0.1, cfg);
  const double m = 0.9 * 0.05 + 0.1 * 0.5, v = 0.999 * 0.00025 + 0.001 * 0.25;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double w1 = 1.0 * (1 - 0.001) - 0.1 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(w(0, 0), w1 * (1 - 0.001) - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-14);
}

TEST(AdamW, DecayIsDecoupledAndSkipsExemptKinds) {
  Mat w(2, 2, 4.0), n(1, 2, 4.0), h(1, 2, 4.0), e(1, 2, 4.0);
  const Mat zw(2, 2), z(1, 2);
  std::vector<ParamRef> p{{"w", &w, ParamKind::Weight}, {"n", &n, ParamKind::Norm}, {"h", &h, ParamKind::Householder}, {"e", &e, ParamKind::Embedding}};
  std::vector<ConstParamRef> g{{"w", &zw, ParamKind::Weight}, {"n", &z, ParamKind::Norm}, {"h", &z, ParamKind::Householder}, {"e", &z, ParamKind::Embedding}};
  AdamWState st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.5;
  optimizer_step(p, g, st, 1.0, cfg);
  EXPECT_EQ(w, Mat(2, 2, 2.0));
  EXPECT_EQ(n, Mat(1, 2, 4.0));
  EXPECT_EQ(h, Mat(1, 2, 4.0));
  EXPECT_EQ(e, Mat(1, 2, 4.0));
}

TEST(AdamW, NonFiniteGradientLeavesParametersUntouched) {
  Mat w{{1.0}}, b{{2.0}};
  const Mat gw{{0.1}}, gb{{NAN}};
  std::vector<ParamRef> p{{"w", &w, ParamKind::Weight}, {"bias_x", &b, ParamKind::Bias}};
  std::vector<ConstParamRef> g{{"w", &gw, ParamKind::Weight}, {"bias_x", &gb, ParamKind::Bias}};
  AdamWState st;
  try {
    optimizer_step(p, g, st, 0.1, {});
    FAIL();
  } catch (const NumericError& err) {
    EXPECT_NE(std::string(err.what()).find("bias_x"), std::string::npos);
  }
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Schedule, OneCycleBoundaries) {
  const double peak = 1e-3;
  EXPECT_NEAR(lr_schedule(0, 100, peak), peak / 25, 1e-18);
  EXPECT_NEAR(lr_schedule(30, 100, peak), peak, 1e-18);
  EXPECT_NEAR(lr_schedule(15, 100, peak), peak / 25 + (peak - peak / 25) * 0.5, 1e-18);
  EXPECT_NEAR(lr_schedule(99, 100, peak), peak / 1e4, 1e-18);
  double prev = peak;
  for (std::size_t s = 31; s < 100; ++s) {
    const double lr = lr_schedule(s, 100, peak);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(lr_schedule(100, 100, peak), std::invalid_argument);
  EXPECT_THROW(lr_schedule(0, 0, peak), std::invalid_argument);
  EXPECT_NEAR(lr_schedule(0, 1, peak), peak / 25, 1e-18);
}

// ------------------------------------------------------------------ metrics

TEST(Metrics, PerfectPredictionsGiveUnitF1) {
  const std::vector<std::size_t> y{0, 1, 2, 2, 1};
  const auto r = compute_metrics(y, y, 3);
  EXPECT_NEAR(r.accuracy, 1.0, 1e-12);
  EXPECT_NEAR(r.macro_f1, 1.0, 1e-12);
}

TEST(Metrics, AllOneClassOnBalancedBinaryGivesOneThird) {
  const std::vector<std::size_t> truth{0, 0, 1, 1}, pred{1, 1, 1, 1};
  const auto r = compute_metrics(pred, truth, 2);
  EXPECT_NEAR(r.macro_f1, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.accuracy, 0.5, 1e-12);
  EXPECT_EQ(r.per_class[0].f1, 0.0);
  EXPECT_NEAR(r.per_class[1].precision, 0.5, 1e-12);
}

TEST(Metrics, AbsentClassesCountAsZero) {
  const std::vector<std::size_t> y{0, 0};
  const auto r = compute_metrics(y, y, 3);
  EXPECT_NEAR(r.macro_f1, 1.0 / 3.0, 1e-12);
}

TEST(Metrics, RandomCasesMatchRecount) {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 2 + rng.below(5), n = 1 + rng.below(40);
    std::vector<std::size_t> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.below(k);
      y[i] = rng.below(k);
    }
    const auto r = compute_metrics(p, y, k);
    double f1 = 0;
    std::size_t hit = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += p[i] == c && y[i] == c;
        fp += p[i] == c && y[i] != c;
        fn += p[i] != c && y[i] == c;
        EXPECT_EQ(r.confusion[y[i]][p[i]] > 0, true);
      }
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0, rec = tp + fn > 0 ? tp / (tp + fn) : 0;
      f1 += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
    }
    for (std::size_t i = 0; i < n; ++i) hit += p[i] == y[i];
    EXPECT_NEAR(r.macro_f1, f1 / static_cast<double>(k), 1e-12);
    EXPECT_NEAR(r.accuracy, static_cast<double>(hit) / static_cast<double>(n), 1e-12);
  }
}

TEST(Metrics, InputErrors) {
  const std::vector<std::size_t> a{0, 1}, b{0}, c{0, 5}, empty;
  EXPECT_THROW(compute_metrics(a, b, 2), std::invalid_argument);
  EXPECT_THROW(compute_metrics(a, c, 2), std::invalid_argument);
  EXPECT_THROW(compute_metrics(empty, empty, 2), std::invalid_argument);
}

TEST(Metrics, CsvAndSummary) {
  const std::vector<std::size_t> truth{0, 0, 1, 1}, pred{1, 1, 1, 1};
  std::ostringstream out;
  write_metrics_csv(out, compute_metrics(pred, truth, 2), {"a", "b"});
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "metric,class,value");
  EXPECT_NE(out.str().find("accuracy,,0.5\n"), std::string::npos);
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.stddev, 1.0);
  EXPECT_EQ(summarize(std::vector<double>{4.0}).stddev, 0.0);
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

// ------------------------------------------------------------------- config

TEST(Config, JsonRoundTripAndOverrides) {
  TrainConfig c;
  c.lambda = 0.25;
  c.model.hgnn_dims = {8, 4, 1};
  c.split = SplitMode::Holdout;
  c.eval_modality.reset();
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_FALSE(back.eval_modality.has_value());
  const auto o = override_config(c, dotted_override("train.lambda=5"));
  EXPECT_DOUBLE_EQ(o.lambda, 5.0);
  const auto s = override_config(c, dotted_override("split.mode=kfold"));
  EXPECT_EQ(s.split, SplitMode::KFold);
  EXPECT_THROW(dotted_override("novalue"), std::invalid_argument);
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"train": {"lamda": 1}})")), ParseError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"train": {"epochs": "many"}})")), ParseError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"bogus": 1})")), ParseError);
}

TEST(Config, ValidationNamesTheKey) {
  TrainConfig c;
  c.epochs = 0;
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("train.epochs"), std::string::npos);
  }
  c = TrainConfig{};
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.fold = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.generator.channels = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Config, ShippedConfigsLoad) {
  const auto c = load_train_config(NFER_SOURCE_DIR "/config/toy_synthetic.json");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.model.dim, 32u);
  EXPECT_EQ(c.generator.seed, 7u);
  EXPECT_THROW(load_train_config("/nonexistent.json"), IoError);
}

// ----------------------------------------------------------------- training

TrainConfig tiny_config() {
  TrainConfig c;
  c.model.image_size = 8;
  c.model.patch = 4;
  c.model.dim = 8;
  c.model.depth = 1;
  c.model.ffn_ratio = 2;
  c.model.hgnn_dims = {4, 2, 1};
  c.generator.image_size = 10;
  c.generator.subjects = 4;
  c.generator.samples_per_cell = 1;
  c.generator.seed = 2;
  c.batch_size = 8;
  c.epochs = 3;
  c.lr = 3e-3;
  c.seed = 5;
  c.folds = 2;
  c.split_seed = 1;
  return c;
}

struct Fixture {
  TrainConfig cfg = tiny_config();
  Hypergraph g = default_knowledge_hypergraph();
  Dataset data = resolve_dataset(cfg, g);
};

TEST(Training, LossDecreases) {
  Fixture f;
  f.cfg.epochs = 8;
  const auto split = split_indices(f.cfg, f.data);
  const auto r = train(f.cfg, f.g, f.data, split.train);
  ASSERT_EQ(r.log.size(), 8u);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
  EXPECT_EQ(r.checkpoint.epochs_done, 8u);
  for (const auto& e : r.log) {
    EXPECT_LE(e.orthogonality_double, 1e-10);
    EXPECT_LE(e.orthogonality_single, 1e-5);
  }
  EXPECT_EQ(r.log.back().steps, 8 * ((split.train.size() + 7) / 8));
}

TEST(Training, ThreadCountDoesNotChangeResults) {
  Fixture f;
  const auto split = split_indices(f.cfg, f.data);
  const auto one = train(f.cfg, f.g, f.data, split.train);
  f.cfg.threads = 3;
  auto three = train(f.cfg, f.g, f.data, split.train);
  three.checkpoint.config.threads = 1;
  EXPECT_EQ(serialize_checkpoint(one.checkpoint), serialize_checkpoint(three.checkpoint));
}

TEST(Training, RepeatedRunsAreBitIdentical) {
  Fixture f;
  const auto split = split_indices(f.cfg, f.data);
  const auto a = train(f.cfg, f.g, f.data, split.train);
  const auto b = train(f.cfg, f.g, f.data, split.train);
  EXPECT_EQ(checkpoint_digest(serialize_checkpoint(a.checkpoint)), checkpoint_digest(serialize_checkpoint(b.checkpoint)));
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(to_jsonl(a.log[i]), to_jsonl(b.log[i]));
  f.cfg.seed = 6;
  const auto c = train(f.cfg, f.g, f.data, split.train);
  EXPECT_NE(serialize_checkpoint(a.checkpoint), serialize_checkpoint(c.checkpoint));
}

TEST(Training, RejectsEmptyOrMismatchedInputs) {
  Fixture f;
  EXPECT_THROW(train(f.cfg, f.g, f.data, {}), ValidationError);
  EXPECT_THROW(train(f.cfg, f.g, f.data, {f.data.size()}), std::invalid_argument);
  auto bad = f.cfg;
  bad.epochs = 0;
  EXPECT_THROW(train(bad, f.g, f.data, {0}), std::invalid_argument);
  const auto twelve = load_incidence_file(NFER_SOURCE_DIR "/config/au_hypergraph_12.txt");
  Dataset five = f.data;
  five.class_names.pop_back();
  EXPECT_THROW(train(f.cfg, twelve, five, {0}), std::invalid_argument);
}

TEST(Training, EvaluateFiltersByModality) {
  Fixture f;
  const auto split = split_indices(f.cfg, f.data);
  const auto r = train(f.cfg, f.g, f.data, split.train);
  const auto nir = evaluate(r.checkpoint.model, f.data, split.test, Modality::NIR);
  const auto all = evaluate(r.checkpoint.model, f.data, split.test, std::nullopt);
  EXPECT_EQ(all.count, split.test.size());
  EXPECT_EQ(nir.count * 2, split.test.size());
  std::vector<std::size_t> vis_only;
  for (auto i : split.test)
    if (f.data.samples[i].modality == Modality::VIS) vis_only.push_back(i);
  EXPECT_THROW(evaluate(r.checkpoint.model, f.data, vis_only, Modality::NIR), ValidationError);
  const auto p1 = predict(r.checkpoint.model, f.data, split.test, std::nullopt, 1);
  const auto p3 = predict(r.checkpoint.model, f.data, split.test, std::nullopt, 3);
  ASSERT_EQ(p1.size(), p3.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1[i].predicted, p3[i].predicted);
    EXPECT_EQ(p1[i].spectrum_score, p3[i].spectrum_score);
  }
}

TEST(Training, SplitModes) {
  Fixture f;
  auto c = f.cfg;
  c.split = SplitMode::None;
  const auto none = split_indices(c, f.data);
  EXPECT_EQ(none.train, none.test);
  c.split = SplitMode::Holdout;
  EXPECT_THROW(split_indices(c, f.data), ValidationError);
  c.generator.holdout_subjects = 1;
  const auto data = resolve_dataset(c, f.g);
  const auto h = split_indices(c, data);
  EXPECT_EQ(h.test.size(), data.size() / 4);
  for (auto i : h.test) EXPECT_TRUE(data.samples[i].holdout);
}

TEST(CrossValidation, TooFewSubjectsIsAnError) {
  Fixture f;
  auto c = f.cfg;
  c.folds = 5;
  EXPECT_THROW(run_cv(c, f.g, f.data), std::invalid_argument);
}

TEST(CrossValidation, FoldsAreIndependentOfOrder) {
  Fixture f;
  f.cfg.epochs = 1;
  const auto both = run_cv(f.cfg, f.g, f.data);
  const auto second = run_cv(f.cfg, f.g, f.data, {1});
  ASSERT_EQ(both.folds.size(), 2u);
  EXPECT_EQ(both.folds[1].metrics.accuracy, second.folds[0].metrics.accuracy);
  EXPECT_EQ(both.folds[0].test_samples + both.folds[1].test_samples, f.data.size());
  std::ostringstream out;
  write_cv_csv(out, both);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "fold,train_samples,test_samples,accuracy,macro_f1");
}

TEST(Features, ExportHasOneRowPerSampleAndIsStable) {
  Fixture f;
  const auto model = Model::create(f.cfg.model, f.g, 3);
  std::vector<std::size_t> idx{0, 5, 9};
  std::ostringstream a, b, agg;
  export_features(a, model, f.data, idx, FeatureKind::ClassEmbedding);
  export_features(b, model, f.data, idx, FeatureKind::ClassEmbedding);
  export_features(agg, model, f.data, idx, FeatureKind::Aggregated);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream in(a.str());
  std::string line;
  std::size_t lines = 0;
  std::getline(in, line);
  EXPECT_EQ(line, "index,modality,expression,subject,f0,f1,f2,f3,f4,f5,f6,f7");
  ++lines;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, idx.size() + 1);
  EXPECT_EQ(agg.str().substr(0, agg.str().find('\n')), "index,modality,expression,subject,f0,f1,f2,f3");
}

TEST(Sweep, WritesOneRowPerLambda) {
  Fixture f;
  f.cfg.epochs = 1;
  const auto rows = lambda_sweep(f.cfg, f.g, f.data, {0.0, 1.0});
  std::ostringstream out;
  write_sweep_csv(out, rows);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "lambda,accuracy,macro_f1,samples");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "1,");
  EXPECT_THROW(lambda_sweep(f.cfg, f.g, f.data, {}), std::invalid_argument);
}

// --------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsExact) {
  Fixture f;
  const auto split = split_indices(f.cfg, f.data);
  const auto r = train(f.cfg, f.g, f.data, split.train);
  const auto bytes = serialize_checkpoint(r.checkpoint);
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.epochs_done, 3u);
  EXPECT_EQ(back.optimizer.step, r.checkpoint.optimizer.step);
  EXPECT_EQ(back.model.hypergraph.incidence, f.g.incidence);
  const auto img = preprocess(f.data.samples[0], 8, false, 0).image;
  EXPECT_EQ(forward(back.model, img).logits, forward(r.checkpoint.model, img).logits);

  const auto dir = test::temp_dir("ckpt");
  save_checkpoint(dir / "m.ckpt", r.checkpoint);
  EXPECT_EQ(checkpoint_digest(serialize_checkpoint(load_checkpoint(dir / "m.ckpt"))), checkpoint_digest(bytes));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsDetected) {
  Checkpoint ck;
  ck.config = tiny_config();
  ck.model = Model::create(ck.config.model, default_knowledge_hypergraph(), 1);
  auto bytes = serialize_checkpoint(ck);
  EXPECT_EQ(checkpoint_digest(bytes), sha256_hex(bytes.substr(0, bytes.size() - 32)));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(deserialize_checkpoint(flipped), ParseError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 40)), ParseError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(magic), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), IoError);
}

TEST(Checkpoint, Sha256KnownAnswer) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

}  // namespace
}  // namespace nfer
