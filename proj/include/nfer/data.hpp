#pragma once
// Samples, the synthetic two-modality generator, directory loading,
// preprocessing and subject-independent fold assignment.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "nfer/hypergraph.hpp"
#include "nfer/image.hpp"
#include "nfer/saod.hpp"

namespace nfer {

struct Sample {
  Image image;
  Modality modality = Modality::NIR;
  std::size_t expression = 0;
  std::int64_t subject = 0;
  /// Generator-designated test subject (confound mode); loaders leave it false.
  bool holdout = false;
  /// File path for loaded samples, empty for generated ones.
  std::string source;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;

  std::size_t size() const { return samples.size(); }
  std::size_t classes() const { return class_names.size(); }
};

const char* modality_name(Modality m);
/// "nir" / "vis", any case. Throws std::invalid_argument otherwise.
Modality parse_modality(const std::string& s);

/// Synthetic faces. Each pixel is
///
///   clip01( base + intensity * sum_{v in AUs(class)} pattern_v
///           + modality signature + subject offset + N(0, noise^2) )
///
/// AU patterns are Gaussian bumps placed once per seed. NIR collapses the
/// content to identical channels, dims it and adds horizontal bands; VIS adds
/// a per-channel color cast. Confound mode scales the signature amplitude of
/// non-holdout subjects by (1 + confound) when the class parity matches the
/// modality (even <-> NIR, odd <-> VIS) and by (1 - confound) otherwise;
/// holdout subjects keep the plain amplitude.
struct GeneratorConfig {
  std::size_t image_size = 32;
  std::size_t channels = 1;
  /// 0 means "take from the hypergraph"; otherwise it must match.
  std::size_t classes = 0;
  std::size_t au_patterns = 0;
  std::size_t subjects = 20;
  /// Samples per (subject, class, modality).
  std::size_t samples_per_cell = 5;
  double noise = 0.05;
  double au_strength = 0.45;
  double modality_strength = 0.25;
  double subject_strength = 0.08;
  double confound = 0.0;
  /// The last `holdout_subjects` subject ids are flagged as holdout.
  std::size_t holdout_subjects = 0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument.
  void validate() const;
};

Dataset generate_synthetic(const GeneratorConfig& cfg, const Hypergraph& hypergraph);

/// Layout root/<modality>/<expression>/<subject>_<idx>.<png|pgm|bmp>.
/// Directory names match case-insensitively; unparseable paths are skipped
/// with a warning. Images are converted to `channels`. Throws ValidationError
/// ("no samples ...") when nothing loads.
Dataset load_image_dir(const std::filesystem::path& root, const std::vector<std::string>& class_names, std::size_t channels);

/// Writes the layout read by load_image_dir as 8-bit PNG.
void write_image_dir(const Dataset& data, const std::filesystem::path& root);

/// Corner-aligned bilinear resize: output pixel i samples source coordinate
/// i * (in - 1) / (out - 1) (0 when out == 1).
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

/// Border added before cropping back to `target`.
std::size_t crop_margin(std::size_t target);

/// Resize to target + crop_margin(target), then crop a target x target window:
/// uniformly random under `seed` when training, centered otherwise.
Sample preprocess(const Sample& sample, std::size_t target, bool train, std::uint64_t seed);

struct FoldSplit {
  std::size_t k = 0;
  std::map<std::int64_t, std::size_t> fold_of;

  /// Sample indices whose subject is (not) in `fold`.
  std::vector<std::size_t> test_indices(const Dataset& data, std::size_t fold) const;
  std::vector<std::size_t> train_indices(const Dataset& data, std::size_t fold) const;
};

/// Subjects sorted, shuffled under `seed`, then dealt round-robin.
/// Throws std::invalid_argument when fewer than k subjects exist or k < 2.
FoldSplit split_subject_kfold(const Dataset& data, std::size_t k, std::uint64_t seed);

/// CSV: index,source,modality,expression,subject,fold (fold empty without a split).
void write_manifest(std::ostream& out, const Dataset& data, const FoldSplit* split = nullptr);

}  // namespace nfer
