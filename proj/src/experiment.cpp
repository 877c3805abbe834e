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

#include "densemble/experiment.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "densemble/errors.hpp"

namespace densemble {

ReidDataset prepare_dataset(const DataConfig& data) {
  ReidDataset ds = data.root.empty() ? generate_synthetic(data.synthetic) : load_dataset(data.root);
  ds.validate();
  return ds;
}

EnsembleConfig resolve_model(const EnsembleConfig& model, const ReidDataset& dataset) {
  std::map<std::size_t, std::size_t> ids;
  for (const ReidImage& im : dataset.train) ids.emplace(im.id, 0);
  EnsembleConfig out = model;
  if (out.num_classes == 0) {
    out.num_classes = ids.size();
  } else if (out.num_classes != ids.size()) {
    throw ConfigError("ensemble.num_classes = " + std::to_string(out.num_classes) + " but the training set has " +
                      std::to_string(ids.size()) + " identities");
  }
  out.validate();
  return out;
}

HeadBreakdown evaluate_heads(const FeatureMatrix& query, const FeatureMatrix& gallery, std::size_t head_dim,
                             Metric metric, std::size_t max_rank) {
  if (head_dim == 0 || query.dim % head_dim != 0 || gallery.dim != query.dim)
    throw DataError("feature width " + std::to_string(query.dim) + " is not a multiple of head width " +
                    std::to_string(head_dim));
  const std::size_t heads = query.dim / head_dim;
  HeadBreakdown out;
  std::vector<std::size_t> prefix;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t one[] = {h};
    out.single.push_back(
        evaluate(rank_gallery(select_heads(query, head_dim, one), select_heads(gallery, head_dim, one), metric),
                 max_rank));
    prefix.push_back(h);
    out.cumulative.push_back(h + 1 == heads ? CmcCurve{}
                                            : evaluate(rank_gallery(select_heads(query, head_dim, prefix),
                                                                    select_heads(gallery, head_dim, prefix), metric),
                                                       max_rank));
  }
  out.full = evaluate(rank_gallery(query, gallery, metric), max_rank);
  out.cumulative.back() = out.full;
  double sum = 0.0;
  out.best_single_map = 0.0;
  for (const CmcCurve& c : out.single) {
    sum += c.mean_ap;
    out.best_single_map = std::max(out.best_single_map, c.mean_ap);
  }
  out.mean_single_map = sum / static_cast<double>(heads);
  return out;
}

RunOutcome run_experiment(const ExperimentConfig& config, const ReidDataset& dataset,
                          const std::function<void(EnsembleModel&)>& on_model, const EpochCallback& on_epoch) {
  config.validate();
  const EnsembleConfig model_config = resolve_model(config.model, dataset);
  const DenseNetConfig& bb = model_config.backbone;
  const TrainingSet train_set = make_training_set(dataset.train, bb.input_height, bb.input_width);

  EnsembleModel model(model_config, config.train.seed);
  RunOutcome out;
  out.log = train(model, train_set, config.train, on_epoch);
  if (on_model) on_model(model);

  std::vector<std::size_t> all(model_config.num_heads());
  std::iota(all.begin(), all.end(), std::size_t{0});
  out.query = extract_features(model, dataset.query, all);
  out.gallery = extract_features(model, dataset.gallery, all);
  out.euclidean =
      evaluate_heads(out.query, out.gallery, model_config.embedding_dim, Metric::Euclidean, config.eval.max_rank);
  out.hamming = evaluate(rank_gallery(out.query, out.gallery, Metric::Hamming), config.eval.max_rank);
  return out;
}

CumulativeTrend cumulative_trend(const HeadBreakdown& breakdown) {
  CumulativeTrend t;
  for (std::size_t h = 1; h < breakdown.cumulative.size(); ++h) {
    ++t.steps;
    t.nondecreasing += breakdown.cumulative[h].mean_ap >= breakdown.cumulative[h - 1].mean_ap ? 1 : 0;
  }
  return t;
}

}  // namespace densemble
