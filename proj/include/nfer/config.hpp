#pragma once
// Run configuration and its JSON form.
//
// {
//   "model":  {"channels", "image_size", "patch", "dim", "depth", "ffn_ratio",
//              "reflections", "hgnn_dims": [d0, ..., 1]},
//   "hypergraph": "<path>"            (empty: built-in AU table),
//   "data":   {"source": "synthetic" | "directory", "directory": "<path>",
//              "generator": {GeneratorConfig fields}},
//   "train":  {"lambda", "batch_size", "epochs", "lr", "weight_decay",
//              "warmup_fraction", "div_factor", "final_div_factor",
//              "beta1", "beta2", "eps", "seed", "threads"},
//   "split":  {"mode": "kfold" | "holdout" | "none", "folds", "fold", "seed"},
//   "eval":   {"modality": "NIR" | "VIS" | "all"}
// }
//
// Every key is optional; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "nfer/data.hpp"
#include "nfer/model.hpp"

namespace nfer {

struct OneCycle {
  double warmup_fraction = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

enum class SplitMode { KFold, Holdout, None };

struct TrainConfig {
  ModelConfig model;
  std::string hypergraph;

  std::string data_source = "synthetic";
  std::string data_directory;
  GeneratorConfig generator;

  double lambda = 0.1;
  std::size_t batch_size = 64;
  std::size_t epochs = 40;
  double lr = 1e-4;
  OneCycle schedule;
  AdamWConfig adamw;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  SplitMode split = SplitMode::KFold;
  std::size_t folds = 5;
  std::size_t fold = 0;
  std::uint64_t split_seed = 0;

  /// Empty means every modality.
  std::optional<Modality> eval_modality = Modality::NIR;

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Starts from defaults and applies the keys present in `j`.
TrainConfig train_config_from_json(const nlohmann::json& j);
/// Relative hypergraph and data paths are taken relative to the file's directory.
TrainConfig load_train_config(const std::filesystem::path& path);

/// Applies `patch` (RFC 7386 merge patch) on top of `cfg`.
TrainConfig override_config(const TrainConfig& cfg, const nlohmann::json& patch);

/// Parses "a.b.c=value" into a merge patch. The value is read as JSON when it
/// parses, otherwise as a string.
nlohmann::json dotted_override(const std::string& assignment);

const char* split_mode_name(SplitMode m);

/// The configured hypergraph file, or the built-in table.
Hypergraph resolve_hypergraph(const TrainConfig& cfg);

/// Generates or loads the configured dataset.
Dataset resolve_dataset(const TrainConfig& cfg, const Hypergraph& g);

}  // namespace nfer
