#include "nfer/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>

#include "nfer/errors.hpp"
#include "nfer/image_io.hpp"
#include "nfer/log.hpp"
#include "nfer/rng.hpp"

namespace nfer {

namespace {

std::string ascii_lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

struct Bump {
  double cy, cx, sigma, amplitude;
};

double bump_at(const Bump& b, double y, double x) {
  const double dy = y - b.cy, dx = x - b.cx;
  return b.amplitude * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
}

constexpr double kBase = 0.4;
constexpr double kNirGain = 0.85;
constexpr double kBandPeriod = 4.0;
constexpr double kVisGain[3] = {1.0, 0.92, 0.84};
constexpr double kVisCast[3] = {0.5, 0.3, 0.1};

// Substream indices; samples use their position in the dataset.
constexpr std::uint64_t kSubjectStream = 1ull << 40;

}  // namespace

const char* modality_name(Modality m) { return m == Modality::NIR ? "NIR" : "VIS"; }

Modality parse_modality(const std::string& s) {
  const auto l = ascii_lower(s);
  if (l == "nir") return Modality::NIR;
  if (l == "vis") return Modality::VIS;
  throw std::invalid_argument("unknown modality '" + s + "' (expected NIR or VIS)");
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("generator config: " + m); };
  if (image_size < 2) fail("image_size must be at least 2");
  if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
  if (subjects == 0) fail("subjects must be positive");
  if (samples_per_cell == 0) fail("samples_per_cell must be positive");
  for (double v : {noise, au_strength, modality_strength, subject_strength})
    if (!(v >= 0.0) || !std::isfinite(v)) fail("strengths and noise must be finite and non-negative");
  if (!(confound >= 0.0 && confound <= 1.0)) fail("confound must lie in [0, 1]");
  if (holdout_subjects > subjects) fail("holdout_subjects exceeds subjects");
}

Dataset generate_synthetic(const GeneratorConfig& cfg, const Hypergraph& g) {
  cfg.validate();
  if (cfg.classes != 0 && cfg.classes != g.edges()) {
    throw std::invalid_argument("generator config: classes = " + std::to_string(cfg.classes) + " but the hypergraph has " + std::to_string(g.edges()) + " hyperedges");
  }
  if (cfg.au_patterns != 0 && cfg.au_patterns != g.vertices()) {
    throw std::invalid_argument("generator config: au_patterns = " + std::to_string(cfg.au_patterns) + " but the hypergraph has " + std::to_string(g.vertices()) + " vertices");
  }
  const std::size_t s = cfg.image_size;
  const double sd = static_cast<double>(s);
  const std::size_t m = g.edges();

  Rng rng(cfg.seed);
  std::vector<Bump> aus;
  for (std::size_t v = 0; v < g.vertices(); ++v) {
    Bump b;
    b.cy = rng.uniform(0.15, 0.85) * (sd - 1);
    b.cx = rng.uniform(0.15, 0.85) * (sd - 1);
    b.sigma = rng.uniform(0.07, 0.13) * sd;
    b.amplitude = cfg.au_strength * rng.uniform(0.6, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    aus.push_back(b);
  }

  // Class templates (luminance only).
  std::vector<std::vector<double>> templates(m, std::vector<double>(s * s, 0.0));
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t v = 0; v < g.vertices(); ++v) {
      if (g.incidence(v, c) == 0.0) continue;
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) templates[c][y * s + x] += bump_at(aus[v], static_cast<double>(y), static_cast<double>(x));
    }

  std::vector<std::vector<double>> subject_field(cfg.subjects, std::vector<double>(s * s, 0.0));
  for (std::size_t subj = 0; subj < cfg.subjects; ++subj) {
    Rng r(Rng::derive(cfg.seed, kSubjectStream + subj));
    const double brightness = 0.5 * cfg.subject_strength * r.normal();
    std::vector<Bump> bumps;
    for (int i = 0; i < 3; ++i) bumps.push_back({r.uniform(0.0, sd - 1), r.uniform(0.0, sd - 1), 0.2 * sd, cfg.subject_strength * r.normal()});
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        double v = brightness;
        for (const auto& b : bumps) v += bump_at(b, static_cast<double>(y), static_cast<double>(x));
        subject_field[subj][y * s + x] = v;
      }
  }

  Dataset data;
  data.class_names = g.edge_names;
  const std::size_t first_holdout = cfg.subjects - cfg.holdout_subjects;
  std::uint64_t index = 0;
  for (std::size_t subj = 0; subj < cfg.subjects; ++subj) {
    const bool holdout = subj >= first_holdout && cfg.holdout_subjects > 0;
    for (std::size_t c = 0; c < m; ++c) {
      for (Modality mod : {Modality::NIR, Modality::VIS}) {
        double amp = cfg.modality_strength;
        if (!holdout && cfg.confound > 0.0) {
          const bool agrees = (c % 2 == 0) == (mod == Modality::NIR);
          amp *= agrees ? 1.0 + cfg.confound : 1.0 - cfg.confound;
        }
        for (std::size_t rep = 0; rep < cfg.samples_per_cell; ++rep, ++index) {
          Rng r(Rng::derive(cfg.seed, index));
          const double intensity = r.uniform(0.75, 1.0);
          Sample smp;
          smp.image = Image(cfg.channels, s, s);
          smp.modality = mod;
          smp.expression = c;
          smp.subject = static_cast<std::int64_t>(subj);
          smp.holdout = holdout;
          for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) {
              const double lum = kBase + intensity * templates[c][y * s + x] + subject_field[subj][y * s + x];
              if (mod == Modality::NIR) {
                // One value for all channels: NIR carries no color.
                const double band = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(y) / kBandPeriod);
                const double v = kNirGain * lum + amp * band + cfg.noise * r.normal();
                for (std::size_t ch = 0; ch < cfg.channels; ++ch) smp.image.at(ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
              } else {
                for (std::size_t ch = 0; ch < cfg.channels; ++ch) {
                  const std::size_t k = cfg.channels == 1 ? 0 : ch;
                  const double v = kVisGain[k] * lum + amp * kVisCast[k] + cfg.noise * r.normal();
                  smp.image.at(ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
              }
            }
          data.samples.push_back(std::move(smp));
        }
      }
    }
  }
  return data;
}

Dataset load_image_dir(const std::filesystem::path& root, const std::vector<std::string>& class_names, std::size_t channels) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  Dataset data;
  data.class_names = class_names;

  auto sorted_entries = [](const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  };
  auto class_index = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto l = ascii_lower(name);
    for (std::size_t i = 0; i < class_names.size(); ++i)
      if (ascii_lower(class_names[i]) == l) return i;
    return std::nullopt;
  };

  std::size_t skipped = 0;
  for (const auto& mod_dir : sorted_entries(root)) {
    if (!fs::is_directory(mod_dir)) continue;
    Modality mod;
    try {
      mod = parse_modality(mod_dir.filename().string());
    } catch (const std::invalid_argument&) {
      logger().warn("skipping {}: not a modality directory", mod_dir.string());
      continue;
    }
    for (const auto& cls_dir : sorted_entries(mod_dir)) {
      if (!fs::is_directory(cls_dir)) continue;
      const auto cls = class_index(cls_dir.filename().string());
      if (!cls) {
        logger().warn("skipping {}: unknown expression", cls_dir.string());
        continue;
      }
      for (const auto& file : sorted_entries(cls_dir)) {
        if (!fs::is_regular_file(file) || !is_image_extension(file)) {
          ++skipped;
          logger().warn("skipping {}: not a supported image", file.string());
          continue;
        }
        const std::string stem = file.stem().string();
        const auto us = stem.find('_');
        std::int64_t subject = 0;
        bool ok = us != std::string::npos && us > 0 && us + 1 < stem.size();
        if (ok) {
          for (std::size_t i = 0; i < stem.size(); ++i) {
            if (i == us) continue;
            if (stem[i] < '0' || stem[i] > '9') ok = false;
          }
        }
        if (ok) {
          try {
            subject = std::stoll(stem.substr(0, us));
          } catch (const std::exception&) {
            ok = false;
          }
        }
        if (!ok) {
          ++skipped;
          logger().warn("skipping {}: file name is not <subject>_<index>", file.string());
          continue;
        }
        Sample s;
        s.image = to_channels(read_image(file), channels);
        s.modality = mod;
        s.expression = *cls;
        s.subject = subject;
        s.source = file.string();
        data.samples.push_back(std::move(s));
      }
    }
  }
  if (data.samples.empty()) throw ValidationError("no samples found under " + root.string());
  logger().info("loaded {} samples from {} ({} skipped)", data.samples.size(), root.string(), skipped);
  return data;
}

void write_image_dir(const Dataset& data, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::map<std::pair<std::int64_t, std::string>, std::size_t> counters;
  for (const auto& s : data.samples) {
    if (s.expression >= data.class_names.size()) throw std::invalid_argument("write_image_dir: expression index out of range");
    const fs::path dir = root / modality_name(s.modality) / data.class_names[s.expression];
    fs::create_directories(dir);
    const auto idx = counters[{s.subject, dir.string()}]++;
    write_png(dir / (std::to_string(s.subject) + "_" + std::to_string(idx) + ".png"), s.image);
  }
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  if (img.height == 0 || img.width == 0 || height == 0 || width == 0) throw std::invalid_argument("resize_bilinear: empty image");
  Image out(img.channels, height, width);
  auto coord = [](std::size_t i, std::size_t in, std::size_t n) {
    return n == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(n - 1);
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = coord(y, img.height, height);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = coord(x, img.width, width);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = (1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1);
        const double bot = (1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1);
        out.at(c, y, x) = static_cast<float>((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

std::size_t crop_margin(std::size_t target) { return target / 7; }

Sample preprocess(const Sample& sample, std::size_t target, bool train, std::uint64_t seed) {
  if (target == 0) throw std::invalid_argument("preprocess: target size must be positive");
  const std::size_t margin = crop_margin(target);
  const std::size_t big = target + margin;
  const Image resized = (sample.image.height == big && sample.image.width == big) ? sample.image : resize_bilinear(sample.image, big, big);
  std::size_t oy = margin / 2, ox = margin / 2;
  if (train && margin > 0) {
    Rng r(seed);
    oy = r.below(margin + 1);
    ox = r.below(margin + 1);
  }
  Sample out = sample;
  out.image = Image(resized.channels, target, target);
  for (std::size_t c = 0; c < resized.channels; ++c)
    for (std::size_t y = 0; y < target; ++y)
      for (std::size_t x = 0; x < target; ++x) out.image.at(c, y, x) = std::clamp(resized.at(c, y + oy, x + ox), 0.0f, 1.0f);
  return out;
}

std::vector<std::size_t> FoldSplit::test_indices(const Dataset& data, std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (fold_of.at(data.samples[i].subject) == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldSplit::train_indices(const Dataset& data, std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (fold_of.at(data.samples[i].subject) != fold) out.push_back(i);
  return out;
}

FoldSplit split_subject_kfold(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("split_subject_kfold: k must be at least 2");
  std::set<std::int64_t> unique;
  for (const auto& s : data.samples) unique.insert(s.subject);
  if (unique.size() < k) {
    throw std::invalid_argument("split_subject_kfold: " + std::to_string(unique.size()) + " subjects cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<std::int64_t> subjects(unique.begin(), unique.end());
  Rng rng(seed);
  rng.shuffle(subjects.begin(), subjects.end());
  FoldSplit split;
  split.k = k;
  for (std::size_t i = 0; i < subjects.size(); ++i) split.fold_of[subjects[i]] = i % k;
  return split;
}

void write_manifest(std::ostream& out, const Dataset& data, const FoldSplit* split) {
  out << "index,source,modality,expression,subject,fold\n";
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    out << i << "," << s.source << "," << modality_name(s.modality) << ",";
    out << (s.expression < data.class_names.size() ? data.class_names[s.expression] : std::to_string(s.expression));
    out << "," << s.subject << ",";
    if (split) out << split->fold_of.at(s.subject);
    out << "\n";
  }
}

}  // namespace nfer
