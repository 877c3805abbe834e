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

#include "densemble/config.hpp"
#include "densemble/errors.hpp"

namespace densemble {
namespace {

TEST(Ini, SectionsCommentsAndLineNumbers) {
  const auto e = parse_ini("a = 1\n# note\n[train]\n  lr = 0.1 ; trailing\n\n[data]\nroot=/x y\n");
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].section, "");
  EXPECT_EQ(e[1].section, "train");
  EXPECT_EQ(e[1].key, "lr");
  EXPECT_EQ(e[1].value, "0.1");
  EXPECT_EQ(e[1].line, 4u);
  EXPECT_EQ(e[2].value, "/x y");
  EXPECT_THROW(parse_ini("[train\n"), ConfigError);
  EXPECT_THROW(parse_ini("novalue\n"), ConfigError);
}

TEST(ExperimentConfig, ProfilesDiffer) {
  const ExperimentConfig mini = ExperimentConfig::profile("mini");
  const ExperimentConfig paper = ExperimentConfig::profile("paper");
  EXPECT_EQ(mini.model.backbone, DenseNetConfig::mini());
  EXPECT_EQ(paper.model.backbone, DenseNetConfig::densenet121());
  EXPECT_EQ(paper.train, TrainConfig::paper());
  EXPECT_EQ(paper.data.synthetic.height, 384u);
  EXPECT_EQ(ExperimentConfig::profile("densenet121-full").model, paper.model);
  EXPECT_THROW(ExperimentConfig::profile("huge"), ConfigError);
}

TEST(ExperimentConfig, TextOverridesApply) {
  const ExperimentConfig c = experiment_config_from_text(
      "profile = mini\n[train]\nlr = 0.2\nepochs = 3\ndecay_epoch = 2\n[ensemble]\nblock4_attach = 1,2,3,4\n"
      "block3_tap = post_transition\n[eval]\nmetric = hamming\nheads = 0-2,5\n[data]\nviews_per_id = 6\n");
  EXPECT_DOUBLE_EQ(c.train.lr0, 0.2);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.model.block4_attach, (std::vector<std::size_t>{1, 2, 3, 4}));
  EXPECT_EQ(c.model.block3_tap, Block3Tap::PostTransition);
  EXPECT_EQ(c.eval.metric, Metric::Hamming);
  EXPECT_EQ(c.eval.heads, "0-2,5");
  EXPECT_EQ(c.data.synthetic.views_per_id, 6u);
}

TEST(ExperimentConfig, ResolvedTextRoundTrips) {
  ExperimentConfig c = ExperimentConfig::profile("paper");
  c.train.lr0 = 0.1 + 0.2;  // not exactly representable in short decimal
  c.train.augment.erasing.aspect_hi = 1.0 / 3.0;
  c.model.block4_attach = {2, 4, 8, 16, 3, 5, 6, 7};
  std::sort(c.model.block4_attach.begin(), c.model.block4_attach.end());
  c.data.root = "some/dir";
  c.output_dir = "runs/a";
  EXPECT_EQ(experiment_config_from_text(c.to_text()), c);
  const ExperimentConfig m = ExperimentConfig::profile("mini");
  EXPECT_EQ(experiment_config_from_text(m.to_text()), m);
}

TEST(ExperimentConfig, BadKeysAndValuesNameTheProblem) {
  try {
    experiment_config_from_text("[train]\nlearning_rate = 1\n", "exp.ini");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("learning_rate"), std::string::npos);
    EXPECT_NE(msg.find("exp.ini"), std::string::npos);
  }
  EXPECT_THROW(experiment_config_from_text("[train]\nepochs = many\n"), ConfigError);
  EXPECT_THROW(experiment_config_from_text("[train]\nepochs = -3\n"), ConfigError);
  EXPECT_THROW(experiment_config_from_text("[nowhere]\nx = 1\n"), ConfigError);
  EXPECT_THROW(experiment_config_from_text("[train]\nlr = 0.1\nprofile = paper\n"), ConfigError);
  EXPECT_THROW(experiment_config_from_text("[eval]\nmetric = cosine\n"), ConfigError);
}

TEST(ModelConfigText, RoundTrip) {
  EnsembleConfig c = EnsembleConfig::paper(4, 1024, 12);
  c.head_init_std = 0.0123;
  EXPECT_EQ(parse_model_config_text(model_config_text(c)), c);
}

TEST(Lists, SizeAndHeadLists) {
  EXPECT_EQ(parse_size_list("1,2, 3"), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_TRUE(parse_size_list("").empty());
  EXPECT_THROW(parse_size_list("1,,2"), ConfigError);
  EXPECT_EQ(parse_head_list("all", 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(parse_head_list("5,0-2,1", 8), (std::vector<std::size_t>{0, 1, 2, 5}));
  EXPECT_THROW(parse_head_list("8", 8), ConfigError);
  EXPECT_THROW(parse_head_list("3-1", 8), ConfigError);
  EXPECT_THROW(parse_head_list("", 8), ConfigError);
}

}  // namespace
}  // namespace densemble
