#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nfer/data.hpp"
#include "nfer/errors.hpp"
#include "nfer/image_io.hpp"
#include "support.hpp"

namespace nfer {
namespace {

namespace fs = std::filesystem;

GeneratorConfig small_generator() {
  GeneratorConfig g;
  g.image_size = 12;
  g.subjects = 6;
  g.samples_per_cell = 2;
  g.seed = 3;
  return g;
}

TEST(Generator, IsDeterministicAndBalanced) {
  const auto g = default_knowledge_hypergraph();
  const auto a = generate_synthetic(small_generator(), g);
  const auto b = generate_synthetic(small_generator(), g);
  ASSERT_EQ(a.size(), 6u * 6 * 2 * 2);
  std::map<std::pair<std::size_t, Modality>, std::size_t> cells;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].image, b.samples[i].image);
    ++cells[{a.samples[i].expression, a.samples[i].modality}];
    for (float p : a.samples[i].image.pixels) {
      EXPECT_GE(p, 0.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
  EXPECT_EQ(cells.size(), 12u);
  for (const auto& [k, n] : cells) EXPECT_EQ(n, 12u);
  EXPECT_EQ(a.class_names, g.edge_names);

  auto other = small_generator();
  other.seed = 4;
  EXPECT_NE(generate_synthetic(other, g).samples[0].image, a.samples[0].image);
}

TEST(Generator, NirChannelsAreIdenticalAndVisChannelsDiffer) {
  auto cfg = small_generator();
  cfg.channels = 3;
  const auto data = generate_synthetic(cfg, default_knowledge_hypergraph());
  bool vis_differs = false;
  for (const auto& s : data.samples) {
    const std::size_t plane = 12 * 12;
    for (std::size_t i = 0; i < plane; ++i) {
      if (s.modality == Modality::NIR) {
        EXPECT_EQ(s.image.pixels[i], s.image.pixels[plane + i]);
        EXPECT_EQ(s.image.pixels[i], s.image.pixels[2 * plane + i]);
      } else if (s.image.pixels[i] != s.image.pixels[2 * plane + i]) {
        vis_differs = true;
      }
    }
  }
  EXPECT_TRUE(vis_differs);
}

TEST(Generator, CleanClassesAreSeparableByNearestTemplate) {
  auto cfg = small_generator();
  cfg.image_size = 16;
  cfg.noise = 0;
  cfg.subject_strength = 0;
  cfg.subjects = 10;
  cfg.samples_per_cell = 3;
  const auto data = generate_synthetic(cfg, default_knowledge_hypergraph());
  // Templates from subjects 0..4, queries from subjects 5..9, per modality.
  std::map<std::pair<std::size_t, Modality>, std::vector<double>> sum;
  std::map<std::pair<std::size_t, Modality>, double> count;
  for (const auto& s : data.samples) {
    if (s.subject >= 5) continue;
    auto& acc = sum[{s.expression, s.modality}];
    acc.resize(s.image.pixels.size());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s.image.pixels[i];
    count[{s.expression, s.modality}] += 1;
  }
  std::size_t right = 0, total = 0;
  for (const auto& s : data.samples) {
    if (s.subject < 5) continue;
    double best = 1e300;
    std::size_t pick = 0;
    for (const auto& [key, acc] : sum) {
      if (key.second != s.modality) continue;
      double dist = 0;
      for (std::size_t i = 0; i < acc.size(); ++i) {
        const double diff = acc[i] / count[key] - s.image.pixels[i];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        pick = key.first;
      }
    }
    right += pick == s.expression;
    ++total;
  }
  EXPECT_GE(static_cast<double>(right) / static_cast<double>(total), 0.99);
}

/// Modality amplitude of NIR samples, read off the band peak rows against a
/// copy generated without the modality signature.
std::vector<std::pair<const Sample*, double>> nir_amplitudes(const Dataset& with, const Dataset& without) {
  std::vector<std::pair<const Sample*, double>> out;
  for (std::size_t i = 0; i < with.size(); ++i) {
    const auto& s = with.samples[i];
    if (s.modality != Modality::NIR) continue;
    double amp = NAN;
    for (std::size_t y = 1; y < s.image.height && std::isnan(amp); y += 4)
      for (std::size_t x = 0; x < s.image.width; ++x) {
        const float a = s.image.at(0, y, x), b = without.samples[i].image.at(0, y, x);
        if (a > 0.0f && a < 1.0f && b > 0.0f && b < 1.0f) {
          amp = static_cast<double>(a) - static_cast<double>(b);
          break;
        }
      }
    out.push_back({&s, amp});
  }
  return out;
}

TEST(Generator, ConfoundScalesSignatureByClassParity) {
  const auto g = default_knowledge_hypergraph();
  auto cfg = small_generator();
  cfg.noise = 0.02;
  cfg.holdout_subjects = 2;
  auto flat = cfg;
  flat.modality_strength = 0;
  for (double rho : {0.0, 0.8}) {
    cfg.confound = rho;
    flat.confound = rho;
    const auto data = generate_synthetic(cfg, g);
    const auto base = generate_synthetic(flat, g);
    for (const auto& [s, amp] : nir_amplitudes(data, base)) {
      ASSERT_FALSE(std::isnan(amp));
      double expected = cfg.modality_strength;
      if (!s->holdout) expected *= s->expression % 2 == 0 ? 1 + rho : 1 - rho;
      EXPECT_NEAR(amp, expected, 1e-6) << "rho=" << rho;
    }
  }
}

TEST(Generator, HoldoutSubjectsIgnoreTheConfound) {
  const auto g = default_knowledge_hypergraph();
  auto cfg = small_generator();
  cfg.holdout_subjects = 2;
  const auto plain = generate_synthetic(cfg, g);
  cfg.confound = 0.8;
  const auto conf = generate_synthetic(cfg, g);
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(plain.samples[i].holdout, plain.samples[i].subject >= 4);
    if (plain.samples[i].holdout) {
      EXPECT_EQ(plain.samples[i].image, conf.samples[i].image);
    }
  }
}

TEST(Generator, RejectsBadConfig) {
  const auto g = default_knowledge_hypergraph();
  auto cfg = small_generator();
  cfg.channels = 2;
  EXPECT_THROW(generate_synthetic(cfg, g), std::invalid_argument);
  cfg = small_generator();
  cfg.classes = 7;
  EXPECT_THROW(generate_synthetic(cfg, g), std::invalid_argument);
  cfg = small_generator();
  cfg.confound = 1.5;
  EXPECT_THROW(generate_synthetic(cfg, g), std::invalid_argument);
  cfg = small_generator();
  cfg.holdout_subjects = 7;
  EXPECT_THROW(generate_synthetic(cfg, g), std::invalid_argument);
}

TEST(Resize, MatchesBilinearOracleOnCheckerboard) {
  Image img(1, 4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) img.at(0, y, x) = static_cast<float>((x + y) % 2);
  const std::size_t oh = 7, ow = 5;
  const Image out = resize_bilinear(img, oh, ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      const double sy = y * 3.0 / 6.0, sx = x * 3.0 / 4.0;
      double v = 0;
      for (std::size_t yy = 0; yy < 4; ++yy)
        for (std::size_t xx = 0; xx < 4; ++xx) {
          const double wy = std::max(0.0, 1 - std::abs(sy - yy)), wx = std::max(0.0, 1 - std::abs(sx - xx));
          v += wy * wx * img.at(0, yy, xx);
        }
      EXPECT_NEAR(out.at(0, y, x), v, 1e-6) << y << "," << x;
    }
}

TEST(Resize, IdentityAndCornersPreserved) {
  Rng rng(1);
  Image img(2, 5, 6);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  EXPECT_EQ(resize_bilinear(img, 5, 6), img);
  const Image big = resize_bilinear(img, 11, 13);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(big.at(c, 0, 0), img.at(c, 0, 0));
    EXPECT_FLOAT_EQ(big.at(c, 10, 12), img.at(c, 4, 5));
  }
  EXPECT_THROW(resize_bilinear(img, 0, 3), std::invalid_argument);
}

TEST(Preprocess, CenterAndRandomCrops) {
  Rng rng(2);
  Sample s;
  s.image = Image(1, 16, 16);
  for (auto& p : s.image.pixels) p = static_cast<float>(rng.uniform());
  EXPECT_EQ(crop_margin(16), 2u);
  const auto center = preprocess(s, 14, false, 0);
  for (std::size_t y = 0; y < 14; ++y)
    for (std::size_t x = 0; x < 14; ++x) EXPECT_EQ(center.image.at(0, y, x), s.image.at(0, y + 1, x + 1));
  std::set<float> corners;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto a = preprocess(s, 14, true, seed);
    EXPECT_EQ(a.image, preprocess(s, 14, true, seed).image);
    corners.insert(a.image.at(0, 0, 0));
  }
  EXPECT_EQ(corners.size(), 9u);
}

void write_bmp24(const fs::path& path, std::size_t w, std::size_t h, std::uint8_t value) {
  const std::size_t stride = (w * 3 + 3) / 4 * 4;
  const std::uint32_t data_size = static_cast<std::uint32_t>(stride * h);
  std::string bytes = "BM";
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u16 = [&](std::uint16_t v) {
    bytes.push_back(static_cast<char>(v & 0xFF));
    bytes.push_back(static_cast<char>(v >> 8));
  };
  u32(54 + data_size);
  u32(0);
  u32(54);
  u32(40);
  u32(static_cast<std::uint32_t>(w));
  u32(static_cast<std::uint32_t>(h));
  u16(1);
  u16(24);
  u32(0);
  u32(data_size);
  u32(2835);
  u32(2835);
  u32(0);
  u32(0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(value));
    for (std::size_t p = w * 3; p < stride; ++p) bytes.push_back(0);
  }
  std::ofstream(path, std::ios::binary) << bytes;
}

TEST(ImageIo, PngAndPgmRoundTrip) {
  const auto dir = test::temp_dir("io");
  Image img(1, 3, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i * 17 % 256) / 255.0f;
  write_png(dir / "a.png", img);
  write_pgm(dir / "a.pgm", img);
  fs::rename(dir / "a.pgm", dir / "a.PGM");
  const Image p = read_image(dir / "a.png"), g = read_image(dir / "a.PGM");
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    EXPECT_NEAR(p.pixels[i], img.pixels[i], 1e-6);
    EXPECT_NEAR(g.pixels[i], img.pixels[i], 1e-6);
  }
  Image rgb(3, 2, 2, 0.25f);
  write_png(dir / "rgb.png", rgb);
  EXPECT_EQ(read_png(dir / "rgb.png").channels, 3u);
  fs::remove_all(dir);
}

TEST(ImageIo, BmpAndConversions) {
  const auto dir = test::temp_dir("bmp");
  write_bmp24(dir / "x.bmp", 3, 2, 51);
  const Image b = read_image(dir / "x.bmp");
  ASSERT_EQ(b.channels, 3u);
  EXPECT_EQ(b.width, 3u);
  EXPECT_EQ(b.height, 2u);
  EXPECT_NEAR(b.pixels[0], 0.2f, 1e-6);
  const Image gray = to_channels(b, 1);
  EXPECT_NEAR(gray.pixels[0], 0.2f, 1e-6);
  EXPECT_EQ(to_channels(gray, 3).channels, 3u);
  fs::remove_all(dir);
}

TEST(ImageIo, Errors) {
  const auto dir = test::temp_dir("err");
  EXPECT_THROW(read_image(dir / "missing.png"), IoError);
  std::ofstream(dir / "bad.png", std::ios::binary) << "not a png";
  EXPECT_THROW(read_image(dir / "bad.png"), ParseError);
  std::ofstream(dir / "bad.pgm", std::ios::binary) << "P7\n1 1\n255\n";
  EXPECT_THROW(read_image(dir / "bad.pgm"), ParseError);
  EXPECT_TRUE(is_image_extension("a.PNG"));
  EXPECT_FALSE(is_image_extension("a.jpg"));
  fs::remove_all(dir);
}

TEST(Loader, ReadsLayoutCaseInsensitively) {
  const auto root = test::temp_dir("loader");
  const std::vector<std::string> classes{"happiness", "sadness"};
  fs::create_directories(root / "nir" / "Happiness");
  fs::create_directories(root / "VIS" / "SADNESS");
  fs::create_directories(root / "VIS" / "unknown");
  fs::create_directories(root / "other");
  Image img(1, 4, 4, 0.5f);
  write_png(root / "nir" / "Happiness" / "7_0.png", img);
  write_pgm(root / "nir" / "Happiness" / "7_1.pgm", img);
  write_bmp24(root / "VIS" / "SADNESS" / "12_0.bmp", 4, 4, 128);
  write_png(root / "VIS" / "SADNESS" / "bad_name.png", img);
  write_png(root / "VIS" / "unknown" / "1_0.png", img);
  std::ofstream(root / "VIS" / "SADNESS" / "3_0.txt") << "x";

  const auto data = load_image_dir(root, classes, 1);
  // Entries are visited in byte order, so "VIS" precedes "nir".
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data.samples[0].modality, Modality::VIS);
  EXPECT_EQ(data.samples[0].expression, 1u);
  EXPECT_EQ(data.samples[0].subject, 12);
  EXPECT_EQ(data.samples[0].image.channels, 1u);
  EXPECT_NEAR(data.samples[0].image.pixels[0], 128.0f / 255.0f, 1e-6);
  EXPECT_FALSE(data.samples[0].source.empty());
  EXPECT_EQ(data.samples[1].modality, Modality::NIR);
  EXPECT_EQ(data.samples[1].expression, 0u);
  EXPECT_EQ(data.samples[1].subject, 7);
  EXPECT_EQ(data.samples[2].subject, 7);
  fs::remove_all(root);
}

TEST(Loader, WriterRoundTrips) {
  const auto root = test::temp_dir("roundtrip");
  const auto g = default_knowledge_hypergraph();
  auto cfg = small_generator();
  cfg.subjects = 2;
  cfg.samples_per_cell = 1;
  const auto data = generate_synthetic(cfg, g);
  write_image_dir(data, root);
  const auto back = load_image_dir(root, g.edge_names, 1);
  ASSERT_EQ(back.size(), data.size());
  std::multiset<std::tuple<int, std::size_t, std::int64_t>> a, b;
  for (const auto& s : data.samples) a.insert({static_cast<int>(s.modality), s.expression, s.subject});
  for (const auto& s : back.samples) b.insert({static_cast<int>(s.modality), s.expression, s.subject});
  EXPECT_EQ(a, b);
  fs::remove_all(root);
}

TEST(Loader, EmptyTreeIsAnError) {
  const auto root = test::temp_dir("empty");
  fs::create_directories(root / "NIR" / "happiness");
  try {
    load_image_dir(root, {"happiness"}, 1);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("no samples"), std::string::npos);
  }
  EXPECT_THROW(load_image_dir(root / "missing", {"happiness"}, 1), IoError);
  fs::remove_all(root);
}

Dataset subjects_dataset(Rng& rng, std::size_t subjects) {
  Dataset d;
  d.class_names = {"a", "b"};
  for (std::size_t s = 0; s < subjects; ++s) {
    const std::int64_t id = static_cast<std::int64_t>(rng.below(1000000)) * 1000 + static_cast<std::int64_t>(s);
    const std::size_t n = 1 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) {
      Sample smp;
      smp.subject = id;
      smp.expression = rng.below(2);
      d.samples.push_back(smp);
    }
  }
  rng.shuffle(d.samples.begin(), d.samples.end());
  return d;
}

TEST(KFold, PropertiesOverRandomDatasets) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 2 + rng.below(6);
    const std::size_t subjects = k + rng.below(20);
    const auto data = subjects_dataset(rng, subjects);
    const std::uint64_t seed = rng.next_u64();
    const auto split = split_subject_kfold(data, k, seed);
    EXPECT_EQ(split.fold_of.size(), subjects);
    std::vector<std::size_t> per_fold(k, 0);
    for (const auto& [subj, f] : split.fold_of) {
      ASSERT_LT(f, k);
      ++per_fold[f];
    }
    const auto [lo, hi] = std::minmax_element(per_fold.begin(), per_fold.end());
    EXPECT_LE(*hi - *lo, 1u);
    EXPECT_GE(*lo, 1u);
    std::vector<int> seen(data.size(), 0);
    for (std::size_t f = 0; f < k; ++f) {
      const auto test_idx = split.test_indices(data, f);
      const auto train_idx = split.train_indices(data, f);
      EXPECT_EQ(test_idx.size() + train_idx.size(), data.size());
      std::set<std::int64_t> test_subjects;
      for (auto i : test_idx) {
        test_subjects.insert(data.samples[i].subject);
        ++seen[i];
      }
      for (auto i : train_idx) EXPECT_EQ(test_subjects.count(data.samples[i].subject), 0u);
    }
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_EQ(split_subject_kfold(data, k, seed).fold_of, split.fold_of);
  }
}

TEST(KFold, TooFewSubjects) {
  Rng rng(6);
  const auto data = subjects_dataset(rng, 3);
  EXPECT_THROW(split_subject_kfold(data, 4, 0), std::invalid_argument);
  EXPECT_THROW(split_subject_kfold(data, 1, 0), std::invalid_argument);
  EXPECT_NO_THROW(split_subject_kfold(data, 3, 0));
}

TEST(Manifest, HeaderAndRows) {
  const auto g = default_knowledge_hypergraph();
  auto cfg = small_generator();
  cfg.subjects = 2;
  cfg.samples_per_cell = 1;
  const auto data = generate_synthetic(cfg, g);
  const auto split = split_subject_kfold(data, 2, 1);
  std::ostringstream out;
  write_manifest(out, data, &split);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,source,modality,expression,subject,fold");
  std::getline(in, line);
  EXPECT_EQ(line, "0,,NIR,happiness,0," + std::to_string(split.fold_of.at(0)));
  std::size_t rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, data.size());
}

TEST(Modality, Names) {
  EXPECT_EQ(parse_modality("nIr"), Modality::NIR);
  EXPECT_EQ(parse_modality("VIS"), Modality::VIS);
  EXPECT_THROW(parse_modality("rgb"), std::invalid_argument);
  EXPECT_STREQ(modality_name(Modality::VIS), "VIS");
}

}  // namespace
}  // namespace nfer
