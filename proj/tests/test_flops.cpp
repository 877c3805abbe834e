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

#include <sstream>

#include "densemble/errors.hpp"
#include "densemble/flops.hpp"

namespace densemble {
namespace {

// Closed-form MAC count written out per stage, sharing no code with the
// analyzer. Spatial extents halve at the stem conv, the stem pool and every
// transition pool (inputs here are divisible by 32).
std::uint64_t spreadsheet_backbone(std::uint64_t k, const std::array<std::uint64_t, 4>& blocks, std::uint64_t stem,
                                   std::uint64_t h, std::uint64_t w) {
  std::uint64_t macs = 0;
  h /= 2;
  w /= 2;
  macs += stem * 3 * 49 * h * w;
  h /= 2;
  w /= 2;
  std::uint64_t c = stem;
  for (int b = 0; b < 4; ++b) {
    for (std::uint64_t i = 0; i < blocks[b]; ++i) {
      macs += (4 * k) * c * h * w;      // 1x1 bottleneck
      macs += k * (4 * k) * 9 * h * w;  // 3x3
      c += k;
    }
    if (b < 3) {
      macs += (c / 2) * c * h * w;
      c /= 2;
      h /= 2;
      w /= 2;
    }
  }
  return macs;
}

TEST(CountLayer, ExampleCosts) {
  EXPECT_EQ(count_layer({"conv", 32, 1, 1, 0}, {128, 12, 4}).macs, 196608u);
  EXPECT_EQ(count_layer({"linear", 512}, {8192}).macs, 4194304u);
  const LayerCost c = count_layer({"conv", 64, 7, 2, 3}, {3, 384, 128});
  EXPECT_EQ(c.output, (Shape{64, 192, 64}));
  EXPECT_EQ(c.macs, 64u * 3 * 49 * 192 * 64);
}

TEST(CountLayer, ElementwiseAndPoolingAreFree) {
  for (const char* kind : {"batchnorm", "relu", "tanh", "gap", "flatten"})
    EXPECT_EQ(count_layer({kind}, {8, 4, 2}).macs, 0u) << kind;
  const LayerCost p = count_layer({"avgpool", 0, 2, 2}, {8, 4, 2});
  EXPECT_EQ(p.output, (Shape{8, 2, 1}));
  EXPECT_EQ(p.macs, 0u);
  EXPECT_EQ(count_layer({"flatten"}, {8, 4, 2}).output, (Shape{64}));
  EXPECT_EQ(count_layer({"gap"}, {8, 4, 2}).output, (Shape{8}));
}

TEST(CountLayer, UnknownKindIsConfigError) {
  EXPECT_THROW(count_layer({"maxpool"}, {1, 2, 2}), ConfigError);
  EXPECT_THROW(count_layer({"linear", 4}, {1, 2, 2}), ConfigError);
}

TEST(CountModel, MiniMatchesSpreadsheet) {
  const EnsembleConfig cfg = EnsembleConfig::mini();
  const FlopReport r = count_model(cfg);
  EXPECT_EQ(r.shared_macs, spreadsheet_backbone(8, {2, 2, 4, 4}, 16, 64, 32));
  // Heads: 4 block-3 groups of 12x4x2 and block-4 states of 32/40/48/56 x 2x1, each into 64.
  const std::uint64_t heads = 4 * (96 * 64) + (64 + 80 + 96 + 112) * 64;
  EXPECT_EQ(r.head_macs, heads);
  EXPECT_EQ(r.total_macs, r.shared_macs + r.head_macs);
}

TEST(CountModel, DenseNet121BaselineNearReportedCost) {
  const FlopReport r = count_baseline(DenseNetConfig::densenet121());
  EXPECT_EQ(r.shared_macs, spreadsheet_backbone(32, {6, 12, 24, 16}, 64, 384, 128));
  EXPECT_EQ(r.head_macs, 1024u * 1024);
  const double g = static_cast<double>(r.total_macs) * 1e-9;
  EXPECT_NEAR(g, 2.82, 0.05 * 2.82);
}

TEST(CountModel, PaperEnsembleNearReportedCostAndMostlyShared) {
  const FlopReport r = count_model(EnsembleConfig::paper());
  const double g = static_cast<double>(r.total_macs) * 1e-9;
  EXPECT_NEAR(g, 2.85, 0.05 * 2.85);
  EXPECT_GE(r.shared_fraction, 0.98);
  // 8 groups of 64x12x4 plus 8 layer outputs of 32x12x4, each into 512.
  EXPECT_EQ(r.head_macs, 8u * (3072 * 512) + 8u * (1536 * 512));
}

TEST(CountModel, DroppingHeadsOnlyChangesHeadCost) {
  const EnsembleConfig cfg = EnsembleConfig::mini();
  const FlopReport all = count_model(cfg);
  const FlopReport none = count_model(cfg, std::span<const std::size_t>{});
  EXPECT_EQ(none.shared_macs, all.shared_macs);
  EXPECT_EQ(none.head_macs, 0u);
  std::vector<std::size_t> heads{0, 1, 2, 3, 4, 5, 6, 7};
  std::uint64_t prev = all.total_macs;
  while (!heads.empty()) {
    heads.pop_back();
    const FlopReport r = count_model(cfg, heads);
    EXPECT_LT(r.total_macs, prev);
    EXPECT_EQ(r.shared_macs, all.shared_macs);
    prev = r.total_macs;
  }
  const std::size_t bad[] = {8};
  EXPECT_THROW(count_model(cfg, bad), ConfigError);
}

TEST(CountModel, DoublingInputAreaDoublesEveryConv) {
  EnsembleConfig a = EnsembleConfig::mini(), b = a;
  b.backbone.input_width = 64;
  const FlopReport ra = count_model(a), rb = count_model(b);
  ASSERT_EQ(ra.records.size(), rb.records.size());
  for (std::size_t i = 0; i < ra.records.size(); ++i)
    if (ra.records[i].kind == "conv") EXPECT_EQ(rb.records[i].macs, 2 * ra.records[i].macs) << ra.records[i].name;
  EXPECT_EQ(rb.shared_macs, 2 * ra.shared_macs);
}

TEST(FlopReport, CsvTotalsAndTable) {
  const FlopReport r = count_model(EnsembleConfig::mini());
  std::ostringstream csv;
  r.write_csv(csv);
  const std::string s = csv.str();
  EXPECT_EQ(s.rfind("name,kind,output_shape,macs,shared\n", 0), 0u);
  EXPECT_NE(s.find("stem.conv,conv,16x32x16,"), std::string::npos);
  EXPECT_NE(s.find("total,,," + std::to_string(r.total_macs) + ",\n"), std::string::npos);
  std::ostringstream table;
  r.write_table(table);
  EXPECT_NE(table.str().find("shared fraction"), std::string::npos);
}

}  // namespace
}  // namespace densemble
