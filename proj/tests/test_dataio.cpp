// Copyright 2026 The densemble Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "densemble/dataio.hpp"
#include "densemble/errors.hpp"
#include "densemble/retrieval.hpp"

namespace densemble {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("densemble_" + name);
  fs::remove_all(p);
  return p;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_train_ids = 4;
  s.n_test_ids = 10;
  s.views_per_id = 6;
  s.n_cams = 2;
  return s;
}

TEST(Synthetic, PartitionCounts) {
  const ReidDataset ds = generate_synthetic(small_spec());
  EXPECT_EQ(ds.train.size(), 24u);
  EXPECT_EQ(ds.query.size(), 20u);
  EXPECT_EQ(ds.gallery.size(), 40u);
  ds.validate();
}

TEST(Synthetic, IdsDisjointAndQueriesOnePerCamera) {
  const ReidDataset ds = generate_synthetic(small_spec());
  std::set<std::size_t> train_ids, test_ids;
  for (const auto& im : ds.train) train_ids.insert(im.id);
  for (const auto& im : ds.gallery) test_ids.insert(im.id);
  for (std::size_t id : train_ids) EXPECT_EQ(test_ids.count(id), 0u);
  EXPECT_EQ(*train_ids.begin(), 1u);
  std::set<std::pair<std::size_t, std::size_t>> id_cam;
  for (const auto& im : ds.query) EXPECT_TRUE(id_cam.insert({im.id, im.cam}).second);
  for (const auto& im : ds.train) {
    EXPECT_EQ(im.image.shape(), (Shape{3, 64, 32}));
    for (double v : im.image.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
      ASSERT_EQ(v * 255.0, std::round(v * 255.0));
    }
  }
}

TEST(Synthetic, SameSeedIsIdenticalOtherSeedDiffers) {
  const ReidDataset a = generate_synthetic(small_spec());
  const ReidDataset b = generate_synthetic(small_spec());
  SyntheticSpec s = small_spec();
  s.seed = 2;
  const ReidDataset c = generate_synthetic(s);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].image, b.train[i].image);
  EXPECT_NE(a.train[0].image, c.train[0].image);
}

TEST(Synthetic, InfeasibleSplitsAreConfigErrors) {
  SyntheticSpec s = small_spec();
  s.n_cams = 1;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
  s = small_spec();
  s.views_per_id = 3;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
  s = small_spec();
  s.n_test_ids = 0;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
}

TEST(Synthetic, RawPixelRankingIsBetweenChanceAndPerfect) {
  const ReidDataset ds = generate_synthetic(SyntheticSpec{});
  auto flat = [](const std::vector<ReidImage>& part) {
    FeatureMatrix f;
    f.rows = part.size();
    f.dim = part.front().image.size();
    for (const auto& im : part) {
      for (double v : im.image.values()) f.values.push_back(static_cast<float>(v));
      f.ids.push_back(static_cast<std::uint32_t>(im.id));
      f.cams.push_back(static_cast<std::uint16_t>(im.cam));
    }
    return f;
  };
  const CmcCurve c = evaluate(rank_gallery(flat(ds.query), flat(ds.gallery), Metric::Euclidean), 1);
  // Chance: one relevant id among ten, each with the same number of views.
  const double chance = 0.1;
  EXPECT_GT(c.mean_ap, 1.5 * chance);
  EXPECT_LT(c.mean_ap, 0.95);
  RecordProperty("raw_pixel_map", std::to_string(c.mean_ap));
}

TEST(ImageName, ParseAndFormat) {
  const ImageName n = parse_image_name("0042_c3_0007.ppm");
  EXPECT_EQ(n.id, 42u);
  EXPECT_EQ(n.cam, 3u);
  EXPECT_EQ(n.index, 7u);
  EXPECT_EQ(format_image_name(42, 3, 7), "0042_c3_0007.ppm");
  for (const char* bad : {"42_3_7.ppm", "0042_c3_0007.png", "x042_c3_0007.ppm", "0042_c3_.ppm"})
    EXPECT_THROW(parse_image_name(bad), DataError) << bad;
}

TEST(DatasetIo, SaveLoadRoundTrip) {
  const fs::path root = scratch_dir("roundtrip");
  SyntheticSpec s = small_spec();
  s.n_test_ids = 3;
  const ReidDataset ds = generate_synthetic(s);
  save_dataset(ds, root.string());
  const ReidDataset back = load_dataset(root.string());
  ASSERT_EQ(back.train.size(), ds.train.size());
  ASSERT_EQ(back.query.size(), ds.query.size());
  ASSERT_EQ(back.gallery.size(), ds.gallery.size());
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, const ReidImage*> by_key;
  for (const auto& im : ds.gallery) by_key[{im.id, im.cam, im.index}] = &im;
  for (const auto& im : back.gallery) {
    const ReidImage* orig = by_key.at({im.id, im.cam, im.index});
    for (std::size_t j = 0; j < im.image.size(); ++j) ASSERT_NEAR(im.image[j], orig->image[j], 0.5 / 255.0);
  }
  fs::remove_all(root);
}

TEST(DatasetIo, EmptyPartitionAndBadFilesAreDataErrors) {
  const fs::path root = scratch_dir("broken");
  SyntheticSpec s = small_spec();
  s.n_test_ids = 2;
  save_dataset(generate_synthetic(s), root.string());
  for (const auto& e : fs::directory_iterator(root / "query")) fs::remove(e.path());
  EXPECT_THROW(load_dataset(root.string()), DataError);
  fs::remove_all(root);

  save_dataset(generate_synthetic(s), root.string());
  std::ofstream(root / "train" / "0001_c1_0099.ppm") << "P3\n1 1\n255\n0 0 0\n";
  try {
    load_dataset(root.string());
    ADD_FAILURE() << "non-P6 file accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("0001_c1_0099.ppm"), std::string::npos);
  }
  fs::remove_all(root);
  EXPECT_THROW(load_dataset(root.string()), DataError);
}

TEST(DatasetIo, PpmRoundTripQuantizes) {
  const fs::path root = scratch_dir("ppm");
  fs::create_directories(root);
  Tensor img({3, 2, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i) / 17.0;
  const std::string path = (root / "x.ppm").string();
  write_ppm(path, img);
  const Tensor back = read_ppm(path);
  EXPECT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 0.5 / 255.0 + 1e-12);
  fs::remove_all(root);
}

TEST(Resize, IdentityAndConstant) {
  Tensor img({2, 5, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::sin(static_cast<double>(i));
  EXPECT_EQ(resize_bilinear(img, 5, 4), img);
  const Tensor up = resize_bilinear(Tensor({3, 4, 2}, 0.37), 8, 4);
  for (double v : up.values()) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(Resize, CheckerboardDownsampleMatchesDirectFormula) {
  const std::size_t H = 16, W = 12, h = 7, w = 5;
  Tensor img({1, H, W});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) img[y * W + x] = ((y + x) % 2) ? 1.0 : 0.0;
  const Tensor out = resize_bilinear(img, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double sy = static_cast<double>(y) * (H - 1) / (h - 1);
      const double sx = static_cast<double>(x) * (W - 1) / (w - 1);
      const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
      const std::size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
      const double fy = sy - y0, fx = sx - x0;
      const double v = (1 - fy) * ((1 - fx) * img[y0 * W + x0] + fx * img[y0 * W + x1]) +
                       fy * ((1 - fx) * img[y1 * W + x0] + fx * img[y1 * W + x1]);
      EXPECT_NEAR(out[y * w + x], v, 1e-6);
    }
}

TEST(TrainingSet, LabelsAreContiguousInIdOrder) {
  const ReidDataset ds = generate_synthetic(small_spec());
  std::map<std::size_t, std::size_t> label_of;
  const TrainingSet t = make_training_set(ds.train, 64, 32, &label_of);
  EXPECT_EQ(t.images.size(), ds.train.size());
  EXPECT_EQ(label_of.size(), 4u);
  std::size_t expect = 0;
  for (const auto& [id, label] : label_of) EXPECT_EQ(label, expect++);
  for (std::size_t i = 0; i < t.labels.size(); ++i) EXPECT_EQ(t.labels[i], label_of.at(ds.train[i].id));
  const TrainingSet big = make_training_set(ds.train, 128, 64);
  EXPECT_EQ(big.images[0].shape(), (Shape{3, 128, 64}));
}

TEST(Validate, CatchesLeakedAndUnmatchedIds) {
  ReidDataset ds = generate_synthetic(small_spec());
  ReidDataset leak = ds;
  leak.train[0].id = leak.gallery[0].id;
  EXPECT_THROW(leak.validate(), DataError);
  ReidDataset orphan = ds;
  orphan.query[0].id = 999;
  EXPECT_THROW(orphan.validate(), DataError);
}

}  // namespace
}  // namespace densemble
