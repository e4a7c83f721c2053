// Command-line front end: train, eval, cv, gen-data, export-features,
// check-invariants, inspect, sweep.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nfer/checkpoint.hpp"
#include "nfer/config.hpp"
#include "nfer/errors.hpp"
#include "nfer/invariants.hpp"
#include "nfer/kernels.hpp"
#include "nfer/log.hpp"
#include "nfer/trainer.hpp"

namespace {

using namespace nfer;
using nlohmann::json;

// Flags shared by every command that builds a TrainConfig.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<double> lambda, lr, weight_decay;
  std::optional<std::size_t> epochs, batch_size, threads, folds, fold;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir, hypergraph, split, eval_modality;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override a config key, e.g. --set train.lr=1e-3 (repeatable)");
    app->add_option("--lambda", lambda, "train.lambda");
    app->add_option("--lr", lr, "train.lr (peak learning rate)");
    app->add_option("--weight-decay", weight_decay, "train.weight_decay");
    app->add_option("--epochs", epochs, "train.epochs");
    app->add_option("--batch-size", batch_size, "train.batch_size");
    app->add_option("--threads", threads, "train.threads");
    app->add_option("--seed", seed, "train.seed");
    app->add_option("--folds", folds, "split.folds");
    app->add_option("--fold", fold, "split.fold");
    app->add_option("--split", split, "split.mode (kfold|holdout|none)");
    app->add_option("--data-dir", data_dir, "image directory (sets data.source=directory)");
    app->add_option("--hypergraph", hypergraph, "incidence file (default: built-in AU table)");
    app->add_option("--eval-modality", eval_modality, "eval.modality (NIR|VIS|all)");
  }

  TrainConfig resolve(const std::optional<TrainConfig>& base = std::nullopt) const {
    TrainConfig cfg = base.value_or(TrainConfig{});
    if (!config_path.empty()) cfg = load_train_config(config_path);
    json patch = json::object();
    for (const auto& s : sets) patch.merge_patch(dotted_override(s));
    auto put = [&](const char* a, const char* b, const json& v) { patch.merge_patch(json{{a, {{b, v}}}}); };
    if (lambda) put("train", "lambda", *lambda);
    if (lr) put("train", "lr", *lr);
    if (weight_decay) put("train", "weight_decay", *weight_decay);
    if (epochs) put("train", "epochs", *epochs);
    if (batch_size) put("train", "batch_size", *batch_size);
    if (threads) put("train", "threads", *threads);
    if (seed) put("train", "seed", *seed);
    if (folds) put("split", "folds", *folds);
    if (fold) put("split", "fold", *fold);
    if (split) put("split", "mode", *split);
    if (eval_modality) put("eval", "modality", *eval_modality);
    if (data_dir) {
      put("data", "source", "directory");
      put("data", "directory", *data_dir);
    }
    if (hypergraph) patch["hypergraph"] = *hypergraph;
    cfg = override_config(cfg, patch);
    cfg.validate();
    return cfg;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path);
  out << text;
}

std::vector<std::size_t> pick(const SplitIndices& s, const std::string& part) {
  if (part == "train") return s.train;
  if (part == "test") return s.test;
  if (part != "all") throw std::invalid_argument("--part must be train, test or all");
  std::vector<std::size_t> all = s.train;
  for (auto i : s.test)
    if (std::find(all.begin(), all.end(), i) == all.end()) all.push_back(i);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectrum-disentangled facial expression recognition toolkit"};
  app.require_subcommand(1);
  std::string backend;
  app.add_option("--backend", backend, "numeric kernels: scalar or avx2 (default: best available)");

  // train
  ConfigFlags train_flags;
  std::string train_out = "model.ckpt", train_log;
  bool train_eval = false;
  auto* train_cmd = app.add_subcommand("train", "train one model on the configured split");
  train_flags.attach(train_cmd);
  train_cmd->add_option("-o,--out", train_out, "checkpoint path");
  train_cmd->add_option("--log", train_log, "per-epoch JSONL log (default: stdout)");
  train_cmd->add_flag("--evaluate", train_eval, "evaluate the test part after training");

  // eval
  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_csv, eval_part = "test";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--csv", eval_csv, "also write metrics as CSV");
  eval_cmd->add_option("--part", eval_part, "train|test|all");

  // cv
  ConfigFlags cv_flags;
  std::string cv_csv;
  auto* cv_cmd = app.add_subcommand("cv", "subject-independent k-fold cross-validation");
  cv_flags.attach(cv_cmd);
  cv_cmd->add_option("--csv", cv_csv, "per-fold table as CSV");

  // gen-data
  ConfigFlags gen_flags;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "write the synthetic dataset as an image directory");
  gen_flags.attach(gen_cmd);
  gen_cmd->add_option("-o,--out", gen_out, "output directory")->required();

  // export-features
  ConfigFlags exp_flags;
  std::string exp_ckpt, exp_out, exp_which = "e_cls", exp_part = "test";
  auto* exp_cmd = app.add_subcommand("export-features", "dump e_cls or E_agg per sample as CSV");
  exp_flags.attach(exp_cmd);
  exp_cmd->add_option("--checkpoint", exp_ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--which", exp_which, "e_cls|e_agg");
  exp_cmd->add_option("--part", exp_part, "train|test|all");
  exp_cmd->add_option("-o,--out", exp_out, "CSV path (default: stdout)");

  // check-invariants
  std::size_t inv_draws = 1000;
  std::uint64_t inv_seed = 0;
  auto* inv_cmd = app.add_subcommand("check-invariants", "run orthogonality and gradient checks");
  inv_cmd->add_option("--draws", inv_draws, "random attention draws");
  inv_cmd->add_option("--seed", inv_seed, "seed");

  // inspect
  ConfigFlags ins_flags;
  std::string ins_ckpt;
  auto* ins_cmd = app.add_subcommand("inspect", "print config, hypergraph and parameter shapes");
  ins_flags.attach(ins_cmd);
  ins_cmd->add_option("--checkpoint", ins_ckpt, "checkpoint to inspect instead of a config")->check(CLI::ExistingFile);

  // sweep
  ConfigFlags sw_flags;
  std::vector<double> sw_lambdas{0.01, 0.1, 1, 5, 10};
  std::string sw_out;
  auto* sw_cmd = app.add_subcommand("sweep", "accuracy versus lambda");
  sw_flags.attach(sw_cmd);
  sw_cmd->add_option("--lambdas", sw_lambdas, "lambda values")->delimiter(',');
  sw_cmd->add_option("-o,--out", sw_out, "CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    logger();
    if (!backend.empty()) {
      if (backend == "scalar") {
        kernels::set_backend(kernels::Backend::Scalar);
      } else if (backend == "avx2") {
        kernels::set_backend(kernels::Backend::Avx2);
      } else {
        throw std::invalid_argument("--backend must be scalar or avx2");
      }
    }

    if (*train_cmd) {
      const auto cfg = train_flags.resolve();
      const auto g = resolve_hypergraph(cfg);
      const auto data = resolve_dataset(cfg, g);
      const auto split = split_indices(cfg, data);
      std::ofstream log_file;
      if (!train_log.empty()) {
        log_file.open(train_log, std::ios::binary);
        if (!log_file) throw IoError("cannot create " + train_log);
      }
      std::ostream& log = train_log.empty() ? std::cout : log_file;
      auto result = train(cfg, g, data, split.train, [&](const EpochRecord& r) { log << to_jsonl(r) << "\n" << std::flush; });
      const auto bytes = serialize_checkpoint(result.checkpoint);
      write_text(train_out, bytes);
      std::cerr << "checkpoint " << train_out << " sha256 " << checkpoint_digest(bytes) << "\n";
      if (train_eval) {
        const auto m = evaluate(result.checkpoint.model, data, split.test, cfg.eval_modality, cfg.threads);
        print_metrics(std::cerr, m, data.class_names);
      }
    } else if (*eval_cmd) {
      const auto ck = load_checkpoint(eval_ckpt);
      const auto cfg = eval_flags.resolve(ck.config);
      const auto data = resolve_dataset(cfg, ck.model.hypergraph);
      const auto m = evaluate(ck.model, data, pick(split_indices(cfg, data), eval_part), cfg.eval_modality, cfg.threads);
      print_metrics(std::cout, m, data.class_names);
      if (!eval_csv.empty()) {
        std::ostringstream ss;
        write_metrics_csv(ss, m, data.class_names);
        write_text(eval_csv, ss.str());
      }
    } else if (*cv_cmd) {
      const auto cfg = cv_flags.resolve();
      const auto g = resolve_hypergraph(cfg);
      const auto data = resolve_dataset(cfg, g);
      const auto r = run_cv(cfg, g, data);
      char line[160];
      std::printf("%-6s %8s %8s %9s %9s\n", "fold", "train", "test", "accuracy", "macro-F1");
      for (const auto& f : r.folds) std::printf("%-6zu %8zu %8zu %9.4f %9.4f\n", f.fold, f.train_samples, f.test_samples, f.metrics.accuracy, f.metrics.macro_f1);
      std::snprintf(line, sizeof line, "mean   accuracy %.4f +- %.4f  macro-F1 %.4f +- %.4f\n", r.accuracy.mean, r.accuracy.stddev, r.macro_f1.mean,
                    r.macro_f1.stddev);
      std::cout << line;
      if (!cv_csv.empty()) {
        std::ostringstream ss;
        write_cv_csv(ss, r);
        write_text(cv_csv, ss.str());
      }
    } else if (*gen_cmd) {
      const auto cfg = gen_flags.resolve();
      const auto g = resolve_hypergraph(cfg);
      const auto data = generate_synthetic(cfg.generator, g);
      write_image_dir(data, gen_out);
      std::ostringstream ss;
      const auto split = cfg.split == SplitMode::KFold ? std::optional(split_subject_kfold(data, cfg.folds, cfg.split_seed)) : std::nullopt;
      write_manifest(ss, data, split ? &*split : nullptr);
      write_text((std::filesystem::path(gen_out) / "manifest.csv").string(), ss.str());
      std::cerr << "wrote " << data.size() << " images to " << gen_out << "\n";
    } else if (*exp_cmd) {
      const auto ck = load_checkpoint(exp_ckpt);
      const auto cfg = exp_flags.resolve(ck.config);
      const auto data = resolve_dataset(cfg, ck.model.hypergraph);
      FeatureKind kind;
      if (exp_which == "e_cls") {
        kind = FeatureKind::ClassEmbedding;
      } else if (exp_which == "e_agg" || exp_which == "E_agg") {
        kind = FeatureKind::Aggregated;
      } else {
        throw std::invalid_argument("--which must be e_cls or e_agg");
      }
      std::ostringstream ss;
      export_features(ss, ck.model, data, pick(split_indices(cfg, data), exp_part), kind);
      write_text(exp_out, ss.str());
    } else if (*inv_cmd) {
      std::printf("kernels: %s\n", std::string(kernels::backend_name(kernels::active_backend())).c_str());
      const auto r = run_invariant_checks(inv_draws, inv_seed);
      for (const auto& c : r.checks) {
        std::printf("%-32s %s  worst %.3e  tol %.0e  (%zu trials)\n", c.name.c_str(), c.passed ? "PASS" : "FAIL", c.worst, c.tolerance, c.trials);
      }
      return r.passed() ? 0 : 1;
    } else if (*ins_cmd) {
      std::optional<Checkpoint> ck;
      if (!ins_ckpt.empty()) ck = load_checkpoint(ins_ckpt);
      const auto cfg = ck ? ck->config : ins_flags.resolve();
      const Model model = ck ? ck->model : Model::create(cfg.model, resolve_hypergraph(cfg), Rng::derive(cfg.seed, kInitStream));
      std::cout << "config:\n" << to_json(cfg).dump(2) << "\n\nhypergraph (" << model.hypergraph.vertices() << " vertices, " << model.hypergraph.edges()
                << " hyperedges):\n"
                << format_incidence(model.hypergraph) << "\nparameters:\n";
      for (const auto& p : model.params.refs()) {
        std::printf("  %-28s %-11s %zux%zu\n", p.name.c_str(), param_kind_name(p.kind), p.value->rows(), p.value->cols());
      }
      std::printf("total scalars: %zu\n", model.params.scalar_count());
      if (ck) std::printf("epochs trained: %llu, optimizer steps: %zu\n", static_cast<unsigned long long>(ck->epochs_done), ck->optimizer.step);
    } else if (*sw_cmd) {
      const auto cfg = sw_flags.resolve();
      const auto g = resolve_hypergraph(cfg);
      const auto data = resolve_dataset(cfg, g);
      const auto rows = lambda_sweep(cfg, g, data, sw_lambdas);
      std::ostringstream ss;
      write_sweep_csv(ss, rows);
      write_text(sw_out, ss.str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
