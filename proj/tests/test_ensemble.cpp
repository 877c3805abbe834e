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
#include <numeric>

#include "densemble/errors.hpp"
#include "densemble/ensemble.hpp"

namespace densemble {
namespace {

Tensor random_images(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed);
  Tensor t({n, 3, 64, 32});
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

std::vector<std::size_t> all_heads(const EnsembleConfig& c) {
  std::vector<std::size_t> h(c.num_heads());
  std::iota(h.begin(), h.end(), std::size_t{0});
  return h;
}

TEST(SplitWidths, RemainderGoesToLastGroup) {
  EXPECT_EQ(split_widths(1024, 8), std::vector<std::size_t>(8, 128));
  EXPECT_EQ(split_widths(10, 4), (std::vector<std::size_t>{2, 2, 2, 4}));
  EXPECT_EQ(split_widths(7, 1), (std::vector<std::size_t>{7}));
  EXPECT_THROW(split_widths(3, 4), ConfigError);
}

TEST(SplitWidths, SingleGroupIsIdentity) {
  Tensor fm({1, 5, 2, 2});
  std::iota(fm.values().begin(), fm.values().end(), 0.0);
  const auto parts = split_channel_groups(fm, 1);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0], fm);
}

TEST(EnsembleConfig, DefaultAttachIsEvenlySpacedCeiling) {
  EnsembleConfig c = EnsembleConfig::mini();
  EXPECT_EQ(c.resolved_attach(), (std::vector<std::size_t>{1, 2, 3, 4}));
  c = EnsembleConfig::paper(8);
  EXPECT_EQ(c.resolved_attach(), (std::vector<std::size_t>{2, 4, 6, 8, 10, 12, 14, 16}));
  c = EnsembleConfig::paper(16, 256);
  EXPECT_EQ(c.resolved_attach().size(), 16u);
  EXPECT_EQ(c.resolved_attach().front(), 1u);
  c = EnsembleConfig::paper(3);
  EXPECT_EQ(c.resolved_attach(), (std::vector<std::size_t>{6, 11, 16}));
}

TEST(EnsembleConfig, ValidationNamesTheProblem) {
  EnsembleConfig c = EnsembleConfig::mini();
  c.block4_attach = {1, 3, 2, 4};
  EXPECT_THROW(c.validate(), ConfigError);
  c.block4_attach = {1, 2, 3};
  EXPECT_THROW(c.validate(), ConfigError);
  c.block4_attach = {1, 2, 3, 3};
  EXPECT_THROW(c.validate(), ConfigError);
  c = EnsembleConfig::mini();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = EnsembleConfig::mini();
  c.embedding_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(HeadTaps, FlattenWidthIsChannelsTimesArea) {
  const auto taps = head_taps(EnsembleConfig::mini());
  ASSERT_EQ(taps.size(), 8u);
  for (std::size_t h = 0; h < 4; ++h) {
    EXPECT_EQ(taps[h].source, TapSpec::Source::Block3Out);
    EXPECT_EQ(taps[h].channels(), 12u);
    EXPECT_EQ(taps[h].flatten_dim(), 12u * 4 * 2);
  }
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(taps[4 + j].state_index, j);
    EXPECT_EQ(taps[4 + j].flatten_dim(), (24 + (j + 1) * 8) * 2u);
  }
}

TEST(HeadTaps, NarrowTapVariants) {
  EnsembleConfig c = EnsembleConfig::mini();
  c.block3_tap = Block3Tap::PostTransition;
  c.block4_tap = Block4Tap::LayerOutput;
  const auto taps = head_taps(c);
  EXPECT_EQ(taps[0].source, TapSpec::Source::Block4State);
  EXPECT_EQ(taps[3].channel_end, 24u);
  EXPECT_EQ(taps[0].flatten_dim(), 6u * 2);
  EXPECT_EQ(taps[5].channel_begin, 32u);
  EXPECT_EQ(taps[5].channel_end, 40u);
  const auto full = head_taps(EnsembleConfig::paper());
  EXPECT_EQ(full[0].flatten_dim(), 64u * 12 * 4);
  EXPECT_EQ(full[8].flatten_dim(), 32u * 12 * 4);
}

TEST(EnsembleForward, ShapesAndEmbeddingRange) {
  EnsembleModel model(EnsembleConfig::mini(), 1);
  const auto outs = model.forward(random_images(3, 2), Mode::Train);
  ASSERT_EQ(outs.size(), 8u);
  for (const auto& o : outs) {
    EXPECT_EQ(o.embedding.shape(), (Shape{3, 64}));
    EXPECT_EQ(o.logits.shape(), (Shape{3, 20}));
    for (double v : o.embedding.values()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(EnsembleForward, FeatureLengthForEveryPublishedPairing) {
  const std::pair<std::size_t, std::size_t> pairings[] = {{4, 1024}, {8, 512}, {16, 256}};
  for (auto [L, H] : pairings) {
    const EnsembleConfig c = EnsembleConfig::paper(L, H);
    c.validate();
    EXPECT_EQ(c.num_heads() * c.embedding_dim, 8192u);
  }
}

TEST(EnsembleForward, HeadsOnDifferentTapsDisagreeAtInit) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EnsembleModel model(EnsembleConfig::mini(), seed);
    const auto outs = model.forward(random_images(1, 100 + seed), Mode::Eval);
    EXPECT_NE(outs[0].embedding, outs[4].embedding);
    EXPECT_NE(outs[1].embedding, outs[7].embedding);
  }
}

TEST(EnsembleLoss, UniformLogitsGiveHeadsTimesLogC) {
  std::vector<BaseLearnerOutput> outs(6);
  for (auto& o : outs) o.logits = Tensor({4, 9}, 0.3);
  const std::size_t labels[] = {0, 3, 8, 2};
  const EnsembleLoss l = ensemble_loss(outs, labels);
  EXPECT_NEAR(l.total, 6 * std::log(9.0), 1e-12);
}

TEST(EnsembleLoss, TotalIsTheSumOfIndependentCrossEntropies) {
  RngStream rng(7);
  std::vector<BaseLearnerOutput> outs(5);
  for (auto& o : outs) {
    o.logits = Tensor({3, 6});
    for (double& v : o.logits.values()) v = rng.normal(0.0, 3.0);
  }
  const std::size_t labels[] = {5, 0, 2};
  double oracle = 0.0;
  for (const auto& o : outs)
    for (std::size_t n = 0; n < 3; ++n) {
      double z = 0.0;
      for (std::size_t k = 0; k < 6; ++k) z += std::exp(o.logits.at(n, k));
      oracle += (std::log(z) - o.logits.at(n, labels[n])) / 3.0;
    }
  const EnsembleLoss l = ensemble_loss(outs, labels);
  EXPECT_NEAR(l.total, oracle, 1e-12);
  double summed = 0.0;
  for (double v : l.per_head) summed += v;
  EXPECT_NEAR(l.total, summed, 1e-12);
}

TEST(EnsembleLoss, SingleHeadIsPlainCrossEntropy) {
  std::vector<BaseLearnerOutput> outs(1);
  outs[0].logits = Tensor({1, 3}, std::vector<double>{1.0, 2.0, 3.0});
  const std::size_t labels[] = {2};
  EXPECT_NEAR(ensemble_loss(outs, labels).total, 0.40760596444438, 1e-12);
}

class EnsembleGradients : public ::testing::Test {
 protected:
  EnsembleConfig config = [] {
    EnsembleConfig c = EnsembleConfig::mini();
    c.head_init_std = 0.05;
    return c;
  }();
  std::vector<std::size_t> labels{3, 11, 7};
};

TEST_F(EnsembleGradients, SharedGradIsSumOfPerHeadBackwards) {
  EnsembleModel model(config, 9);
  const Tensor x = random_images(3, 10);
  const auto outs = model.forward(x, Mode::Train);
  const EnsembleLoss loss = ensemble_loss(outs, labels);

  model.zero_grad();
  model.backward(loss.grad_logits);
  std::vector<Tensor> joint;
  for (Parameter* p : model.shared_parameters()) joint.push_back(p->grad);

  std::vector<Tensor> summed;
  for (Parameter* p : model.shared_parameters()) summed.push_back(Tensor::zeros_like(p->value));
  for (std::size_t h = 0; h < config.num_heads(); ++h) {
    std::vector<Tensor> only(config.num_heads());
    only[h] = loss.grad_logits[h];
    model.zero_grad();
    model.backward(only);
    const auto shared = model.shared_parameters();
    for (std::size_t i = 0; i < shared.size(); ++i) summed[i] += shared[i]->grad;
    for (std::size_t other = 0; other < config.num_heads(); ++other)
      if (other != h)
        for (Parameter* p : model.head_parameters(other))
          for (double g : p->grad.values()) ASSERT_EQ(g, 0.0) << p->name;
  }
  for (std::size_t i = 0; i < joint.size(); ++i)
    for (std::size_t j = 0; j < joint[i].size(); ++j)
      ASSERT_NEAR(joint[i][j], summed[i][j], 1e-10 * std::max(1.0, std::abs(joint[i][j])));
}

TEST_F(EnsembleGradients, ZeroWeightHeadGetsNoGradient) {
  EnsembleModel model(config, 11);
  const Tensor x = random_images(3, 12);
  const auto outs = model.forward(x, Mode::Train);
  std::vector<double> weights(config.num_heads(), 1.0);
  weights[2] = 0.0;
  const EnsembleLoss weighted = ensemble_loss(outs, labels, weights);
  model.zero_grad();
  model.backward(weighted.grad_logits);
  for (Parameter* p : model.head_parameters(2))
    for (double g : p->grad.values()) EXPECT_EQ(g, 0.0);
  double reduced = 0.0;
  for (Parameter* p : model.shared_parameters())
    for (double g : p->grad.values()) reduced += std::abs(g);

  model.zero_grad();
  model.backward(ensemble_loss(outs, labels).grad_logits);
  double full = 0.0;
  for (Parameter* p : model.shared_parameters())
    for (double g : p->grad.values()) full += std::abs(g);
  EXPECT_GT(reduced, 0.0);
  EXPECT_NE(reduced, full);
}

TEST(EnsembleModel, EmbedConcatenatesInHeadOrderAndMatchesForward) {
  EnsembleModel model(EnsembleConfig::mini(), 13);
  const Tensor x = random_images(5, 14);
  const auto heads = all_heads(model.config());
  const Tensor full = model.embed(x, heads, 2);
  ASSERT_EQ(full.shape(), (Shape{5, 512}));
  const auto outs = model.forward(x, Mode::Eval);
  for (std::size_t n = 0; n < 5; ++n)
    for (std::size_t h = 0; h < 8; ++h)
      for (std::size_t d = 0; d < 64; ++d) ASSERT_EQ(full.at(n, h * 64 + d), outs[h].embedding.at(n, d));
  const std::size_t subset[] = {6, 1};
  const Tensor part = model.embed(x, subset);
  EXPECT_EQ(part.at(4, 0), full.at(4, 6 * 64));
  EXPECT_EQ(part.at(4, 64), full.at(4, 1 * 64));
  const std::size_t bad[] = {8};
  EXPECT_THROW(model.embed(x, bad), ConfigError);
}

TEST(EnsembleModel, SeedDeterminesInitialization) {
  EnsembleModel a(EnsembleConfig::mini(), 21), b(EnsembleConfig::mini(), 21), c(EnsembleConfig::mini(), 22);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  EXPECT_NE(pa.front()->value, pc.front()->value);
}

TEST(EnsembleModel, CheckpointRoundTrip) {
  EnsembleConfig cfg = EnsembleConfig::mini();
  cfg.num_classes = 7;
  cfg.block4_attach = {1, 2, 3, 4};
  EnsembleModel model(cfg, 31);
  const Tensor x = random_images(4, 32);
  model.forward(x, Mode::Train);  // moves batchnorm running statistics off their defaults
  const auto path = (std::filesystem::temp_directory_path() / "densemble_ckpt_test.bin").string();
  model.save(path);
  EnsembleModel loaded = EnsembleModel::load(path);
  EXPECT_EQ(loaded.config(), cfg);
  const auto heads = all_heads(cfg);
  EXPECT_EQ(loaded.embed(x, heads), model.embed(x, heads));
  std::filesystem::remove(path);
  EXPECT_THROW(EnsembleModel::load(path), DataError);
}

TEST(EnsembleModel, TruncatedCheckpointIsDataError) {
  EnsembleModel model(EnsembleConfig::mini(), 33);
  const auto path = (std::filesystem::temp_directory_path() / "densemble_ckpt_trunc.bin").string();
  model.save(path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  EXPECT_THROW(EnsembleModel::load(path), DataError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace densemble
