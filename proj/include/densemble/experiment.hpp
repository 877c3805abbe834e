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

#pragma once

// End-to-end runs shared by the command-line tool, the acceptance checks and
// the Python module: data preparation, training, feature extraction and the
// per-head / cumulative evaluation breakdown.

#include <cstddef>
#include <functional>
#include <vector>

#include "densemble/config.hpp"

namespace densemble {

/// Loads `data.root` when set, otherwise generates the synthetic set. The
/// result has passed ReidDataset::validate.
ReidDataset prepare_dataset(const DataConfig& data);

/// Fills num_classes from the training ids when it is 0 and checks it
/// otherwise.
EnsembleConfig resolve_model(const EnsembleConfig& model, const ReidDataset& dataset);

struct HeadBreakdown {
  std::vector<CmcCurve> single;      // head h alone
  std::vector<CmcCurve> cumulative;  // heads 0..h
  CmcCurve full;                     // every head in the matrix
  double mean_single_map = 0.0;
  double best_single_map = 0.0;
};

/// `query`/`gallery` hold all heads side by side, `head_dim` columns each.
HeadBreakdown evaluate_heads(const FeatureMatrix& query, const FeatureMatrix& gallery, std::size_t head_dim,
                             Metric metric, std::size_t max_rank);

struct RunOutcome {
  TrainLog log;
  FeatureMatrix query;    // all heads
  FeatureMatrix gallery;  // all heads
  HeadBreakdown euclidean;
  CmcCurve hamming;  // all heads, quantized
};

/// Trains a fresh model seeded with config.train.seed on `dataset`, then
/// extracts and scores every head. `on_model` sees the trained model.
RunOutcome run_experiment(const ExperimentConfig& config, const ReidDataset& dataset,
                          const std::function<void(EnsembleModel&)>& on_model = {},
                          const EpochCallback& on_epoch = {});

/// Fraction of head-addition steps (cumulative[h-1] -> cumulative[h]) that
/// do not lower mAP, and their count.
struct CumulativeTrend {
  std::size_t steps = 0;
  std::size_t nondecreasing = 0;
};
CumulativeTrend cumulative_trend(const HeadBreakdown& breakdown);

}  // namespace densemble
