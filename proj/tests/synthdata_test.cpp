// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "oodkit/data/dataset.hpp"
#include "oodkit/data/export.hpp"
#include "oodkit/data/idx.hpp"
#include "oodkit/data/sem_data.hpp"
#include "oodkit/data/synth.hpp"

namespace oodkit::data {
namespace {

std::size_t plane() { return kSide * kSide; }

Raster channel_raster(const Example& ex, int ch) {
  Raster r{};
  for (std::size_t p = 0; p < plane(); ++p) r[p] = ex.x[ch * plane() + p];
  return r;
}

// Template matcher: nearest clean glyph over all 9 translations (Hamming).
int shape_by_template(const Raster& r) {
  int best = 0;
  double best_d = 1e9;
  for (int shape = 0; shape < 2; ++shape) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const Raster t = translate(base_glyph(shape), dy, dx);
        double d = 0;
        for (std::size_t p = 0; p < plane(); ++p) d += std::abs(t[p] - r[p]);
        if (d < best_d) best_d = d, best = shape;
      }
    }
  }
  return best;
}

TEST(Colored, PerfectCorrelationMakesColorALabelOracle) {
  const auto ds = gen_colored({{0, 1.0, 0.0, 0.0, 500}}, 3);
  std::size_t hits = 0;
  for (const auto& ex : ds) hits += ex.c == ex.y;
  EXPECT_EQ(hits, ds.size());
}

TEST(Colored, DefaultEnvsAgreementWithinTwoPercent) {
  auto envs = default_colored_train();
  auto test = default_colored_test();
  envs.insert(envs.end(), test.begin(), test.end());
  const auto ds = gen_colored(envs, 0);
  for (const auto& e : envs) {
    std::size_t n = 0, agree = 0;
    for (const auto& ex : ds) {
      if (ex.env != e.id) continue;
      ++n;
      agree += ex.c == ex.y;
    }
    ASSERT_EQ(n, 5000u);
    const double rate = static_cast<double>(agree) / static_cast<double>(n);
    EXPECT_NEAR(rate, e.correlation, 0.02) << "env " << e.id;
    // Binomial 4-sigma band.
    EXPECT_LT(std::abs(rate - e.correlation), 4.0 * std::sqrt(e.correlation * (1 - e.correlation) / 5000.0) + 1e-12);
  }
}

TEST(Colored, ShapeOnlyClassifierReachesOneMinusFlip) {
  const auto ds = gen_colored({{0, 0.8, 0.0, 0.25, 10000}}, 1);
  std::size_t hits = 0;
  for (const auto& ex : ds) hits += shape_by_template(channel_raster(ex, ex.c)) == ex.y;
  EXPECT_NEAR(static_cast<double>(hits) / static_cast<double>(ds.size()), 0.75, 0.015);
}

TEST(Colored, ExactlyOneChannelCarriesTheGlyph) {
  const auto ds = gen_colored(default_colored_train(300), 2);
  for (const auto& ex : ds) {
    ASSERT_EQ(ex.x.shape(), (Shape{2, 8, 8}));
    for (std::size_t p = 0; p < plane(); ++p) EXPECT_EQ(ex.x[(1 - ex.c) * plane() + p], 0.0);
  }
}

TEST(Colored, SameSeedSameBytesDifferentSeedDiffers) {
  EXPECT_EQ(gen_colored(default_colored_train(200), 9), gen_colored(default_colored_train(200), 9));
  EXPECT_NE(gen_colored(default_colored_train(200), 9), gen_colored(default_colored_train(200), 10));
  EXPECT_EQ(gen_rotated(default_rotated_train(200), 9), gen_rotated(default_rotated_train(200), 9));
}

TEST(Colored, Errors) {
  EXPECT_THROW(gen_colored({}, 0), ConfigError);
  EXPECT_THROW(gen_colored({{0, 1.5, 0.0, 0.25, 10}}, 0), ConfigError);
  EXPECT_THROW(gen_rotated({{0, 0.5, 360.0, 0.25, 10}}, 0), ConfigError);
}

TEST(Colored, GrayscaleRemovesColor) {
  const auto ds = to_grayscale(gen_colored(default_colored_train(50), 0));
  for (const auto& ex : ds)
    for (std::size_t p = 0; p < plane(); ++p) EXPECT_EQ(ex.x[p], ex.x[plane() + p]);
}

Raster random_raster(Rng& rng) {
  Raster r{};
  for (auto& v : r) v = rng.uniform();
  return r;
}

TEST(Rotated, ZeroAngleIsIdentity) {
  Rng rng(0, "rot0");
  for (int i = 0; i < 20; ++i) {
    const Raster r = random_raster(rng);
    EXPECT_EQ(rotate(r, 0.0), r);
  }
}

TEST(Rotated, HalfTurnIsAnInvolutionAndQuarterTurnHasOrderFour) {
  Rng rng(0, "rot180");
  for (int i = 0; i < 20; ++i) {
    const Raster r = random_raster(rng);
    EXPECT_EQ(rotate(rotate(r, 180.0), 180.0), r);
    EXPECT_EQ(rotate(rotate(rotate(rotate(r, 90.0), 90.0), 90.0), 90.0), r);
    // Pixel (i, j) lands on (7 - i, 7 - j).
    const Raster h = rotate(r, 180.0);
    EXPECT_EQ(h[0], r[63]);
    EXPECT_EQ(h[8 * 2 + 5], r[8 * 5 + 2]);
  }
}

TEST(Rotated, QuarterTurnIsCounterClockwise) {
  Raster r{};
  r[0 * 8 + 7] = 1.0;  // top-right corner
  const Raster q = rotate(r, 90.0);
  EXPECT_EQ(q[0 * 8 + 0], 1.0);  // moves to top-left
}

// Orientation of the mean glyph from its central second moments, in degrees.
double orientation_deg(const Dataset& ds, int env) {
  std::array<double, 64> mean{};
  std::size_t n = 0;
  for (const auto& ex : ds) {
    if (ex.env != env || ex.y != 0) continue;
    ++n;
    for (std::size_t p = 0; p < plane(); ++p) mean[p] += ex.x[p] + ex.x[plane() + p];
  }
  double m = 0, mx = 0, my = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const double w = mean[i * 8 + j] / static_cast<double>(n);
      m += w, mx += w * static_cast<double>(j), my += w * (7.0 - static_cast<double>(i));
    }
  mx /= m, my /= m;
  double mu20 = 0, mu02 = 0, mu11 = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const double w = mean[i * 8 + j] / static_cast<double>(n);
      const double x = static_cast<double>(j) - mx, y = 7.0 - static_cast<double>(i) - my;
      mu20 += w * x * x, mu02 += w * y * y, mu11 += w * x * y;
    }
  return 0.5 * std::atan2(2 * mu11, mu20 - mu02) * 180.0 / std::numbers::pi;
}

TEST(Rotated, DefaultEnvsHaveDistinctOrientations) {
  auto envs = default_rotated_train();
  auto test = default_rotated_test();
  envs.insert(envs.end(), test.begin(), test.end());
  const auto ds = gen_rotated(envs, 0);
  std::vector<double> th;
  for (const auto& e : envs) th.push_back(orientation_deg(ds, e.id));
  for (std::size_t a = 0; a < th.size(); ++a)
    for (std::size_t b = a + 1; b < th.size(); ++b) {
      double d = std::fmod(std::abs(th[a] - th[b]), 180.0);
      d = std::min(d, 180.0 - d);
      EXPECT_GT(d, 15.0) << "envs " << a << "," << b << " orientations " << th[a] << " " << th[b];
    }
}

TEST(Rotated, ContextIsEnvironmentIndex) {
  for (const auto& ex : gen_rotated(default_rotated_train(100), 4)) EXPECT_EQ(ex.c, ex.env);
}

TEST(Sem, ZeroNoiseIsDeterministic) {
  for (const auto& s : sem_sample(0.0, 100, 1)) {
    EXPECT_EQ(s.y, s.x1);
    EXPECT_EQ(s.c, s.x2);
  }
}

TEST(Sem, CovarianceMatrixMatchesModel) {
  for (double sigma : {1.0, 0.5}) {
    const auto v = sem_sample(sigma, 100000, 5);
    const double s2 = sigma * sigma;
    // Order: x1, y, x2, c.
    const double expect[4][4] = {{s2, s2, s2, s2},
                                 {s2, 2 * s2, 2 * s2, 2 * s2},
                                 {s2, 2 * s2, 2 * s2 + 1, 2 * s2 + 1},
                                 {s2, 2 * s2, 2 * s2 + 1, 3 * s2 + 1}};
    auto get = [](const SemSample& s, int k) { return k == 0 ? s.x1 : k == 1 ? s.y : k == 2 ? s.x2 : s.c; };
    for (int a = 0; a < 4; ++a)
      for (int b = a; b < 4; ++b) {
        double ma = 0, mb = 0, cab = 0;
        for (const auto& s : v) ma += get(s, a), mb += get(s, b);
        ma /= v.size(), mb /= v.size();
        for (const auto& s : v) cab += (get(s, a) - ma) * (get(s, b) - mb);
        cab /= static_cast<double>(v.size() - 1);
        EXPECT_NEAR(cab, expect[a][b], 0.05 * expect[a][b]) << "sigma " << sigma << " entry " << a << b;
      }
  }
}

TEST(Sem, Errors) {
  EXPECT_THROW(sem_sample(-0.1, 10, 0), ConfigError);
  EXPECT_THROW(sem_sample(1.0, 0, 0), ConfigError);
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                     std::uint8_t fill) {
  std::vector<std::uint8_t> b;
  for (auto v : {magic, n, rows, cols}) {
    auto w = be32(v);
    b.insert(b.end(), w.begin(), w.end());
  }
  b.resize(b.size() + static_cast<std::size_t>(n) * rows * cols, fill);
  return b;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t magic, const std::vector<std::uint8_t>& digits) {
  std::vector<std::uint8_t> b;
  for (auto v : {magic, static_cast<std::uint32_t>(digits.size())}) {
    auto w = be32(v);
    b.insert(b.end(), w.begin(), w.end());
  }
  b.insert(b.end(), digits.begin(), digits.end());
  return b;
}

TEST(Idx, MinimalFileYieldsOneExample) {
  const auto img = idx_images(0x803, 1, 28, 28, 255);
  ASSERT_EQ(img[0], 0x00);
  ASSERT_EQ(img[2], 0x08);
  ASSERT_EQ(img[3], 0x03);
  const auto ds = parse_idx(img, idx_labels(0x801, {7}));
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].x.shape(), (Shape{1, 28, 28}));
  EXPECT_EQ(ds[0].x[100], 1.0);
  EXPECT_EQ(ds[0].y, 1);
}

TEST(Idx, ErrorsOnBadInput) {
  const auto lbl = idx_labels(0x801, {1});
  EXPECT_THROW(parse_idx(idx_images(0x802, 1, 28, 28, 0), lbl), FormatError);
  EXPECT_THROW(parse_idx(idx_images(0x803, 1, 28, 28, 0), idx_labels(0x802, {1})), FormatError);
  auto truncated = idx_images(0x803, 1, 28, 28, 0);
  truncated.pop_back();
  EXPECT_THROW(parse_idx(truncated, lbl), FormatError);
  EXPECT_THROW(parse_idx(idx_images(0x803, 2, 28, 28, 0), lbl), FormatError);
  EXPECT_THROW(parse_idx(std::vector<std::uint8_t>{0, 0}, lbl), FormatError);
}

TEST(Idx, LargeFileFromDiskMatchesLabelHistogram) {
  const std::size_t n = 60000;
  std::vector<std::uint8_t> digits(n);
  std::array<std::size_t, 10> hist{};
  Rng rng(0, "idx");
  for (auto& d : digits) ++hist[d = static_cast<std::uint8_t>(rng.below(10))];
  const auto dir = std::filesystem::temp_directory_path() / "oodkit_idx_test";
  std::filesystem::create_directories(dir);
  auto dump = [&](const std::string& name, const std::vector<std::uint8_t>& b) {
    std::ofstream(dir / name, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                                      static_cast<std::streamsize>(b.size()));
  };
  dump("images", idx_images(0x803, n, 4, 4, 17));
  dump("labels", idx_labels(0x801, digits));
  const auto ds = load_idx((dir / "images").string(), (dir / "labels").string());
  ASSERT_EQ(ds.size(), n);
  std::size_t ones = 0;
  for (const auto& ex : ds) ones += ex.y;
  EXPECT_EQ(ones, hist[5] + hist[6] + hist[7] + hist[8] + hist[9]);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_idx((dir / "images").string(), (dir / "labels").string()), FormatError);
}

TEST(Idx, ColorizeAppliesTheColoredConstruction) {
  const auto gray = parse_idx(idx_images(0x803, 400, 4, 4, 128), idx_labels(0x801, std::vector<std::uint8_t>(400, 8)));
  const auto ds = colorize(gray, {{0, 1.0, 0.0, 0.0, 400}}, 0);
  for (const auto& ex : ds) {
    EXPECT_EQ(ex.y, 1);
    EXPECT_EQ(ex.c, 1);
    EXPECT_EQ(ex.x.shape(), (Shape{2, 4, 4}));
    EXPECT_EQ(ex.x[0], 0.0);
  }
}

TEST(Split, NinetyTenSeededPartition) {
  const auto ds = gen_colored(default_colored_train(500), 0);
  const auto [train, val] = split_train_val(ds, 0.1, 3);
  EXPECT_EQ(val.size(), 100u);
  EXPECT_EQ(train.size() + val.size(), ds.size());
  const auto again = split_train_val(ds, 0.1, 3);
  EXPECT_EQ(again.first, train);
  EXPECT_NE(split_train_val(ds, 0.1, 4).second, val);
}

TEST(Export, RoundTripsThroughDisk) {
  auto envs = default_colored_train(40);
  const auto ds = gen_colored(envs, 6);
  const auto dir = std::filesystem::temp_directory_path() / "oodkit_export_test";
  std::filesystem::remove_all(dir);
  const auto manifest = write_dataset(dir, ds, {"colored", 6, envs});
  EXPECT_EQ(manifest["envs"].size(), 2u);
  EXPECT_EQ(manifest["envs"][1]["count"], 40);
  EXPECT_EQ(std::filesystem::file_size(dir / "env_0.bin"), 40u * (8 + 8 * 128));
  EXPECT_EQ(read_dataset(dir), ds);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace oodkit::data
