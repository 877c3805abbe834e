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

#include "densemble/errors.hpp"
#include "densemble/grad_check.hpp"

namespace densemble {
namespace {

TEST(GradCheck, RelativeErrorDenominator) {
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-10), 1e-10 / 1e-8);
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
}

TEST(GradCheck, HarnessFlagsAWrongGradient) {
  Tensor x({3}, std::vector<double>{0.5, -1.0, 2.0});
  Tensor wrong({3}, std::vector<double>{1.0, -2.0, 4.0});  // d/dx x^3 would be 3x^2
  const GradVariable vars[] = {{"x", &x, &wrong}};
  const auto rep = check_gradients(
      "cube", [&] { return std::vector<double>{x[0] * x[0] * x[0], x[1] * x[1] * x[1], x[2] * x[2] * x[2]}; }, vars);
  EXPECT_GT(rep.max_rel_error, 0.5);
  EXPECT_EQ(rep.coords, 3u);
}

TEST(GradCheck, CoordinateSamplingIsBoundedAndSeeded) {
  Tensor x({50}, 1.0), g({50}, 2.0);
  const GradVariable vars[] = {{"x", &x, &g}};
  GradCheckOptions opt;
  opt.max_coords = 7;
  auto terms = [&] {
    double s = 0.0;
    for (double v : x.values()) s += v * v;
    return std::vector<double>{s};
  };
  const auto a = check_gradients("sq", terms, vars, opt), b = check_gradients("sq", terms, vars, opt);
  EXPECT_EQ(a.coords, 7u);
  EXPECT_EQ(a.worst.index, b.worst.index);
  EXPECT_LE(a.max_rel_error, 1e-9);
}

TEST(GradCheck, LinearWithinOneInAMillion) {
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    EXPECT_LE(check_primitive("linear", seed).max_rel_error, 1e-6) << seed;
}

TEST(GradCheck, Conv3x3Pad1WithinOneInAMillion) {
  // The primitive draw covers k in {1,3}; pin the 3x3 pad-1 case explicitly.
  RngStream rng(5);
  Tensor x({2, 3, 5, 4}), w({4, 3, 3, 3}), r({2, 4, 5, 4});
  for (Tensor* t : {&x, &w, &r})
    for (double& v : t->values()) v = rng.normal();
  const Conv2dGrads g = conv2d_backward(x, w, r, 1, 1);
  const GradVariable vars[] = {{"input", &x, &g.input}, {"weight", &w, &g.weight}};
  const auto rep = check_gradients(
      "conv3x3",
      [&] {
        const Tensor y = conv2d(x, w, 1, 1);
        std::vector<double> t(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) t[i] = y[i] * r[i];
        return t;
      },
      vars);
  EXPECT_LE(rep.max_rel_error, 1e-6);
  EXPECT_EQ(rep.coords, x.size() + w.size());
}

class PrimitiveSweep : public ::testing::TestWithParam<std::string> {};

TEST_P(PrimitiveSweep, TwentySeedsWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto rep = check_primitive(GetParam(), seed);
    EXPECT_LE(rep.max_rel_error, 1e-5) << "seed " << seed << " " << rep.detail << " worst " << rep.worst.tensor
                                       << "[" << rep.worst.index << "]";
    EXPECT_GT(rep.coords, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveSweep, ::testing::ValuesIn(primitive_kinds()),
                         [](const auto& info) { return info.param; });

TEST(GradCheck, UnknownPrimitiveIsConfigError) { EXPECT_THROW(check_primitive("softplus", 0), ConfigError); }

TEST(GradCheck, MiniEnsembleModelSampled) {
  EnsembleConfig cfg = EnsembleConfig::mini();
  cfg.head_init_std = 0.1;
  GradCheckOptions opt;
  opt.max_coords = 2;
  const auto rep = check_model(cfg, 3, 2, opt);
  EXPECT_LE(rep.max_rel_error, 1e-4) << rep.worst.tensor << "[" << rep.worst.index << "]";
  EXPECT_GT(rep.coords, 150u);
}

}  // namespace
}  // namespace densemble
