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

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "densemble/errors.hpp"
#include "densemble/trainer.hpp"

namespace densemble {
namespace {

TEST(LrSchedule, PaperProfileCheckpoints) {
  const TrainConfig c = TrainConfig::paper();
  EXPECT_DOUBLE_EQ(lr_at(0, c), 0.05);
  EXPECT_DOUBLE_EQ(lr_at(39, c), 0.05);
  EXPECT_NEAR(lr_at(40, c), 0.005, 1e-15);
  EXPECT_NEAR(lr_at(49, c), 0.005, 1e-15);
}

TEST(LrSchedule, DeskProfileDecaysAtEpoch24) {
  const TrainConfig c = TrainConfig::desk();
  EXPECT_EQ(c.epochs, 30u);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_DOUBLE_EQ(lr_at(23, c), c.lr0);
  EXPECT_DOUBLE_EQ(lr_at(24, c), c.lr0 * 0.1);
}

Parameter scalar(double w, double g) {
  Parameter p("w", Tensor({1}, w));
  p.grad[0] = g;
  return p;
}

TEST(SgdStep, PlainGradientStep) {
  Parameter p = scalar(1.5, 0.4);
  Parameter* ps[] = {&p};
  sgd_step(ps, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(p.value[0], 1.5 - 0.1 * 0.4);
}

TEST(SgdStep, TwoStepsWithMomentumMatchClosedForm) {
  for (double m : {0.0, 0.5, 0.9}) {
    Parameter p = scalar(2.0, 0.3);
    Parameter* ps[] = {&p};
    sgd_step(ps, 0.05, m, 0.0);
    sgd_step(ps, 0.05, m, 0.0);
    EXPECT_NEAR(p.value[0] - 2.0, -0.05 * 0.3 * (2.0 + m), 1e-15);
  }
}

TEST(SgdStep, MatchesScalarRecurrenceWithWeightDecay) {
  RngStream rng(3);
  Parameter p("w", Tensor({7}));
  for (double& v : p.value.values()) v = rng.normal();
  std::vector<double> w(p.value.values().begin(), p.value.values().end()), v(7, 0.0);
  Parameter* ps[] = {&p};
  for (int step = 0; step < 10; ++step) {
    for (std::size_t i = 0; i < 7; ++i) p.grad[i] = std::sin(step + 0.3 * i);
    sgd_step(ps, 0.02, 0.9, 5e-4);
    for (std::size_t i = 0; i < 7; ++i) {
      v[i] = 0.9 * v[i] + std::sin(step + 0.3 * i) + 5e-4 * w[i];
      w[i] -= 0.02 * v[i];
    }
  }
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(p.value[i], w[i], 1e-14);
}

Tensor ramp(std::size_t c, std::size_t h, std::size_t w) {
  Tensor t({c, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 10.0 + static_cast<double>(i);
  return t;
}

TEST(RandomErasing, RectangleRespectsAreaAspectAndBounds) {
  const Tensor img = ramp(3, 64, 32);
  RandomErasingParams params;
  params.probability = 1.0;
  std::size_t erased = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    RngStream rng(seed);
    const ErasingResult r = random_erasing(img, rng, params);
    if (!r.rect) continue;
    ++erased;
    const EraseRect& e = *r.rect;
    ASSERT_LE(e.top + e.height, 64u);
    ASSERT_LE(e.left + e.width, 32u);
    const double frac = static_cast<double>(e.height * e.width) / (64.0 * 32.0);
    EXPECT_GE(frac, params.area_lo);
    EXPECT_LE(frac, params.area_hi);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const std::size_t i = (c * 64 + y) * 32 + x;
          const bool inside = y >= e.top && y < e.top + e.height && x >= e.left && x < e.left + e.width;
          if (inside) {
            ASSERT_GE(r.image[i], 0.0);
            ASSERT_LT(r.image[i], 1.0);
          } else {
            ASSERT_EQ(r.image[i], img[i]);
          }
        }
  }
  EXPECT_GT(erased, 450u);
}

TEST(RandomErasing, ProbabilityZeroIsIdentity) {
  const Tensor img = ramp(3, 16, 8);
  RandomErasingParams params;
  params.probability = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RngStream rng(seed);
    const ErasingResult r = random_erasing(img, rng, params);
    EXPECT_FALSE(r.rect.has_value());
    EXPECT_EQ(r.image, img);
  }
}

TEST(RandomErasing, FiringRateTracksProbability) {
  const Tensor img = ramp(1, 64, 32);
  RandomErasingParams params;
  std::size_t fired = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    RngStream rng(seed);
    fired += random_erasing(img, rng, params).rect.has_value();
  }
  EXPECT_NEAR(static_cast<double>(fired) / 2000.0, 0.5, 0.05);
}

TEST(RandomErasing, InvalidParamsRejected) {
  RandomErasingParams p;
  p.area_lo = 0.5;
  p.area_hi = 0.1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.probability = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Augment, FlipReversesRowsAndIsAnInvolution) {
  const Tensor img = ramp(2, 3, 5);
  const Tensor f = horizontal_flip(img);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(f[(c * 3 + y) * 5 + x], img[(c * 3 + y) * 5 + 4 - x]);
  EXPECT_EQ(horizontal_flip(f), img);
}

TEST(Augment, PadCropShiftsAndZeroFills) {
  const Tensor img = ramp(1, 4, 4);
  EXPECT_EQ(pad_crop(img, 2, 2, 2), img);
  const Tensor s = pad_crop(img, 2, 0, 4);  // down 2, left 2
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const bool valid = y >= 2 && x + 2 < 4;
      EXPECT_EQ(s[y * 4 + x], valid ? img[(y - 2) * 4 + x + 2] : 0.0) << y << "," << x;
    }
}

TEST(Augment, NoSwitchesIsIdentity) {
  const Tensor img = ramp(3, 8, 4);
  RngStream rng(1);
  EXPECT_EQ(augment(img, rng, AugmentSwitches::none()), img);
}

TEST(EpochOrder, IsAPermutationThatChangesPerEpoch) {
  const auto a = epoch_order(50, 9, 0);
  const auto b = epoch_order(50, 9, 1);
  EXPECT_EQ(a, epoch_order(50, 9, 0));
  EXPECT_NE(a, b);
  std::set<std::size_t> s(a.begin(), a.end());
  EXPECT_EQ(s.size(), 50u);
  EXPECT_EQ(*s.rbegin(), 49u);
}

TrainingSet tiny_set(std::size_t classes, std::size_t per_class) {
  TrainingSet set;
  RngStream rng(77);
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      Tensor t({3, 64, 32});
      for (double& v : t.values()) v = std::clamp(0.2 * static_cast<double>(c) + rng.normal(0.3, 0.1), 0.0, 1.0);
      set.images.push_back(std::move(t));
      set.labels.push_back(c);
    }
  return set;
}

EnsembleConfig tiny_model(std::size_t classes) {
  EnsembleConfig c = EnsembleConfig::mini();
  c.num_classes = classes;
  return c;
}

TrainConfig short_run() {
  TrainConfig t = TrainConfig::desk();
  t.epochs = 2;
  t.batch_size = 4;
  t.decay_epoch = 1;
  return t;
}

TEST(Train, SameSeedGivesByteIdenticalLogAndWeights) {
  const TrainingSet data = tiny_set(3, 4);
  std::string logs[2];
  std::vector<Tensor> weights[2];
  for (int r = 0; r < 2; ++r) {
    EnsembleModel model(tiny_model(3), 5);
    std::ostringstream os;
    train(model, data, short_run()).write_csv(os);
    logs[r] = os.str();
    for (Parameter* p : model.parameters()) weights[r].push_back(p->value);
  }
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(weights[0], weights[1]);
  EXPECT_EQ(logs[0].substr(0, logs[0].find('\n')),
            "epoch,lr,total_loss,head_0_loss,head_1_loss,head_2_loss,head_3_loss,head_4_loss,head_5_loss,"
            "head_6_loss,head_7_loss,head_0_acc,head_1_acc,head_2_acc,head_3_acc,head_4_acc,head_5_acc,head_6_acc,"
            "head_7_acc");
}

TEST(Train, LogRecordsScheduleAndLossSum) {
  const TrainingSet data = tiny_set(3, 4);
  EnsembleModel model(tiny_model(3), 6);
  const TrainLog log = train(model, data, short_run());
  ASSERT_EQ(log.epochs.size(), 2u);
  EXPECT_DOUBLE_EQ(log.epochs[0].lr, 0.05);
  EXPECT_NEAR(log.epochs[1].lr, 0.005, 1e-15);
  for (const EpochRecord& r : log.epochs) {
    double s = 0.0;
    for (double v : r.head_loss) s += v;
    EXPECT_NEAR(r.total_loss, s, 1e-9);
  }
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const TrainingSet data = tiny_set(3, 4);
  EnsembleModel model(tiny_model(3), 7);
  std::vector<Tensor> before;
  for (Parameter* p : model.parameters()) before.push_back(p->value);
  TrainConfig t = short_run();
  t.lr0 = 0.0;
  train(model, data, t);
  const auto after = model.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(after[i]->value, before[i]) << after[i]->name;
}

TEST(Train, RejectsBadData) {
  EnsembleModel model(tiny_model(3), 8);
  TrainingSet data = tiny_set(3, 1);
  TrainConfig t = short_run();
  t.batch_size = 8;
  EXPECT_THROW(train(model, data, t), DataError);
  data = tiny_set(4, 2);
  EXPECT_THROW(train(model, data, short_run()), DataError);
  EXPECT_THROW(train(model, TrainingSet{}, short_run()), DataError);
}

TEST(Train, InvalidConfigIsConfigError) {
  EnsembleModel model(tiny_model(3), 8);
  TrainConfig t = short_run();
  t.batch_size = 0;
  EXPECT_THROW(train(model, tiny_set(3, 4), t), ConfigError);
}

}  // namespace
}  // namespace densemble
