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
#include <set>

#include "densemble/backbone.hpp"
#include "densemble/errors.hpp"

namespace densemble {
namespace {

// Channel recurrence evaluated independently of describe_backbone.
struct Recurrence {
  std::array<std::size_t, 4> block_in{}, block_out{};
};

Recurrence recurrence(const DenseNetConfig& c) {
  Recurrence r;
  std::size_t ch = c.stem_channels;
  for (int b = 0; b < 4; ++b) {
    r.block_in[b] = ch;
    ch += c.block_sizes[b] * c.growth_rate;
    r.block_out[b] = ch;
    if (b < 3) ch = static_cast<std::size_t>(std::floor(c.compression * static_cast<double>(ch)));
  }
  return r;
}

TEST(Geometry, DenseNet121Widths) {
  const auto g = describe_backbone(DenseNetConfig::densenet121());
  EXPECT_EQ(g.blocks[2].out_channels, 1024u);
  EXPECT_EQ(g.transitions[2].out_channels, 512u);
  EXPECT_EQ(g.blocks[3].in_channels, 512u);
  EXPECT_EQ(g.blocks[3].out_channels, 1024u);
  // last layer of block 4 reads 512 + 15*32 = 992 channels
  EXPECT_EQ(g.blocks[3].in_channels + 15 * 32, 992u);
  EXPECT_EQ(g.blocks[1].out_channels / 2, g.blocks[2].in_channels);
}

TEST(Geometry, DenseNet121SpatialExtents) {
  const auto g = describe_backbone(DenseNetConfig::densenet121());
  EXPECT_EQ(g.stem_conv_height, 192u);
  EXPECT_EQ(g.stem_conv_width, 64u);
  EXPECT_EQ(g.blocks[0].height, 96u);
  EXPECT_EQ(g.blocks[0].width, 32u);
  EXPECT_EQ(g.blocks[2].height, 24u);
  EXPECT_EQ(g.blocks[2].width, 8u);
  EXPECT_EQ(g.blocks[3].height, 12u);
  EXPECT_EQ(g.blocks[3].width, 4u);
}

TEST(Geometry, RecurrenceOracleAgreesOnSeveralConfigs) {
  std::vector<DenseNetConfig> configs{DenseNetConfig::mini(), DenseNetConfig::densenet121()};
  DenseNetConfig odd = DenseNetConfig::mini();
  odd.growth_rate = 5;
  odd.compression = 0.7;
  odd.block_sizes = {1, 3, 2, 5};
  configs.push_back(odd);
  for (const auto& c : configs) {
    const auto g = describe_backbone(c);
    const auto r = recurrence(c);
    for (int b = 0; b < 4; ++b) {
      EXPECT_EQ(g.blocks[b].in_channels, r.block_in[b]);
      EXPECT_EQ(g.blocks[b].out_channels, r.block_out[b]);
    }
  }
}

TEST(Geometry, MiniConfig) {
  const auto g = describe_backbone(DenseNetConfig::mini());
  const auto r = recurrence(DenseNetConfig::mini());
  EXPECT_EQ(r.block_out[0], 32u);  // 16 + 2*8
  EXPECT_EQ(g.blocks[2].out_channels, 48u);
  EXPECT_EQ(g.blocks[3].in_channels, 24u);
  EXPECT_EQ(g.blocks[3].out_channels, 56u);
  EXPECT_EQ(g.blocks[2].height, 4u);
  EXPECT_EQ(g.blocks[2].width, 2u);
  EXPECT_EQ(g.blocks[3].height, 2u);
  EXPECT_EQ(g.blocks[3].width, 1u);
}

TEST(Geometry, TransitionCompression) {
  EXPECT_EQ(transition_channels(256, 0.5), 128u);
  EXPECT_EQ(transition_channels(1024, 0.5), 512u);
  EXPECT_EQ(transition_channels(7, 0.5), 3u);
  EXPECT_THROW(transition_channels(1, 0.5), ConfigError);
}

TEST(Geometry, OddExtentAtTransitionIsConfigError) {
  DenseNetConfig c = DenseNetConfig::mini();
  c.input_height = 48;  // 24 -> 12 -> 6 -> 3 -> odd at the third transition
  EXPECT_THROW(c.validate(), ConfigError);
  c = DenseNetConfig::mini();
  c.compression = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DenseNetConfig::mini();
  c.block_sizes[1] = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DenseLayer, AppendsGrowthRateChannels) {
  RngStream rng(1);
  DenseLayer layer("l", 6, 4, 4, rng);
  Tensor x({2, 6, 3, 3}, 0.5);
  x[5] = 2.0;
  const Tensor y = layer.forward(x, Mode::Train);
  ASSERT_EQ(y.shape(), (Shape{2, 10, 3, 3}));
  for (std::size_t i = 0; i < 6 * 9; ++i) EXPECT_EQ(y[i], x[i]);  // state passes through
  EXPECT_THROW(layer.forward(Tensor({2, 5, 3, 3}), Mode::Train), ConfigError);
}

TEST(Transition, IdentityCompressionPoolsConstant) {
  RngStream rng(2);
  Transition t("t", 3, 1.0, rng);
  const Tensor y = t.forward(Tensor({2, 3, 2, 2}, 0.25), Mode::Eval);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 1, 1}));
  Tensor one({1, 3, 2, 2}, 0.25);
  const Tensor direct = t.forward(one, Mode::Eval);
  EXPECT_EQ(direct[0], y[0]);
  EXPECT_THROW(t.forward(Tensor({1, 3, 3, 2}), Mode::Eval), ConfigError);
}

TEST(Backbone, TapShapesFollowTheRecurrence) {
  RngStream rng(3);
  const DenseNetConfig c = DenseNetConfig::mini();
  Backbone bb(c, rng);
  const BackboneTaps taps = bb.forward(Tensor({2, 3, 64, 32}, 0.3), Mode::Train);
  EXPECT_EQ(taps.block3_out.shape(), (Shape{2, 48, 4, 2}));
  ASSERT_EQ(taps.block4_states.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(taps.block4_states[i].shape(), (Shape{2, 24 + (i + 1) * 8, 2, 1}));
  EXPECT_THROW(bb.forward(Tensor({1, 3, 32, 32}), Mode::Eval), ConfigError);
}

TEST(Backbone, EvalIsPerSampleAndBatchOrderInvariant) {
  RngStream rng(4);
  Backbone bb(DenseNetConfig::mini(), rng);
  RngStream data(5);
  Tensor batch({3, 3, 64, 32});
  const std::size_t per = 3 * 64 * 32;
  for (std::size_t i = 0; i < per; ++i) batch[i] = batch[per + i] = data.uniform();  // samples 0 and 1 identical
  for (std::size_t i = 0; i < per; ++i) batch[2 * per + i] = data.uniform();
  const Tensor out = bb.forward(batch, Mode::Eval).block4_states.back();
  const std::size_t po = out.size() / 3;
  for (std::size_t i = 0; i < po; ++i) EXPECT_EQ(out[i], out[po + i]);

  Tensor swapped(batch.shape());
  std::copy_n(batch.data() + 2 * per, per, swapped.data());
  std::copy_n(batch.data(), 2 * per, swapped.data() + per);
  const Tensor out2 = bb.forward(swapped, Mode::Eval).block4_states.back();
  for (std::size_t i = 0; i < po; ++i) {
    EXPECT_EQ(out2[i], out[2 * po + i]);
    EXPECT_EQ(out2[po + i], out[i]);
  }
}

TEST(Backbone, ParameterNamesAreUniqueAndOrdered) {
  RngStream rng(6);
  Backbone bb(DenseNetConfig::mini(), rng);
  std::vector<Parameter*> params;
  bb.collect_parameters(params);
  EXPECT_EQ(params.front()->name, "stem.conv");
  std::set<std::string> names;
  for (const Parameter* p : params) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  std::vector<Tensor*> buffers;
  bb.collect_buffers(buffers);
  std::size_t bn = 0;
  for (const Parameter* p : params) bn += p->name.ends_with(".gamma");
  EXPECT_EQ(buffers.size(), 2 * bn);
}

}  // namespace
}  // namespace densemble
