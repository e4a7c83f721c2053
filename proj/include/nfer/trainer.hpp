#pragma once
// Training loop, evaluation, cross-validation, feature export and the
// lambda sweep.

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nfer/checkpoint.hpp"
#include "nfer/config.hpp"
#include "nfer/data.hpp"
#include "nfer/metrics.hpp"
#include "nfer/model.hpp"

namespace nfer {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps so far
  double lr = 0;          // rate of the last step
  double loss = 0;        // sample means over the epoch
  double classification_loss = 0;
  double spectrum_loss = 0;
  double train_accuracy = 0;
  /// max |O_S O_I^T| over every block on a probe sample.
  double orthogonality_double = 0;
  double orthogonality_single = 0;
};

/// One JSON object per line.
std::string to_jsonl(const EpochRecord& r);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> log;
};

/// Train/test sample indices for the configured split.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SplitIndices split_indices(const TrainConfig& cfg, const Dataset& data);
SplitIndices split_indices(const TrainConfig& cfg, const Dataset& data, std::size_t fold);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch AdamW on the joint loss over `train_idx`. The model is
/// initialized from Rng::derive(cfg.seed, kInitStream); each epoch shuffles
/// and crops from its own substream of cfg.seed. Per-sample
/// gradients may be computed on cfg.threads threads and are summed in batch
/// order, so results do not depend on the thread count. Throws NumericError
/// (with epoch and step) on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const Hypergraph& g, const Dataset& data, const std::vector<std::size_t>& train_idx,
                  const EpochCallback& on_epoch = {});

struct Prediction {
  std::size_t index = 0;
  std::size_t predicted = 0;
  std::size_t truth = 0;
  double spectrum_score = 0;
};

/// Center-crop predictions over `indices` restricted to `modality` when set.
std::vector<Prediction> predict(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices, std::optional<Modality> modality,
                                std::size_t threads = 1);

/// Throws ValidationError when the modality filter leaves no samples.
MetricsReport evaluate(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices, std::optional<Modality> modality,
                       std::size_t threads = 1);

struct OrthogonalityProbe {
  double double_precision = 0;
  double single_precision = 0;
};

/// Runs every block's dual-head attention literally (materialized W) in
/// double and in float on `image` and reports the worst |O_S O_I^T| entry.
OrthogonalityProbe probe_orthogonality(const Model& model, const Image& image);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  MetricsReport metrics;
};

struct CvReport {
  std::vector<FoldResult> folds;
  Summary accuracy;
  Summary macro_f1;
};

/// Trains one model per fold from scratch; fold f uses seed
/// Rng::derive(cfg.seed, kFoldStream + f), so each fold is independent of the
/// others and of the order they run in.
CvReport run_cv(const TrainConfig& cfg, const Hypergraph& g, const Dataset& data, const std::vector<std::size_t>& folds_to_run = {});

void write_cv_csv(std::ostream& out, const CvReport& r);

enum class FeatureKind { ClassEmbedding, Aggregated };

/// index,modality,expression,subject,f0..f{k-1}; one row per sample.
void export_features(std::ostream& out, const Model& model, const Dataset& data, const std::vector<std::size_t>& indices, FeatureKind which);

struct SweepRow {
  double lambda = 0;
  MetricsReport metrics;
};

/// Trains on the configured split once per lambda and evaluates the test part.
std::vector<SweepRow> lambda_sweep(const TrainConfig& cfg, const Hypergraph& g, const Dataset& data, const std::vector<double>& lambdas);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

inline constexpr std::uint64_t kInitStream = 0x1000;
inline constexpr std::uint64_t kFoldStream = 0x2000;
inline constexpr std::uint64_t kCropStream = 0x3000;

}  // namespace nfer
