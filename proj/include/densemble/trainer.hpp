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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "densemble/ensemble.hpp"
#include "densemble/rng.hpp"

namespace densemble {

struct RandomErasingParams {
  double probability = 0.5;
  double area_lo = 0.02;
  double area_hi = 0.4;
  double aspect_lo = 0.3;
  double aspect_hi = 3.33;

  void validate() const;
  bool operator==(const RandomErasingParams&) const = default;
};

struct AugmentSwitches {
  bool flip = true;
  bool crop = true;
  std::size_t crop_pad = 4;
  bool random_erasing = true;
  RandomErasingParams erasing;

  static AugmentSwitches none() { return {false, false, 4, false, {}}; }
  bool operator==(const AugmentSwitches&) const = default;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr0 = 0.05;
  std::size_t epochs = 30;
  std::size_t decay_epoch = 24;
  double decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  AugmentSwitches augment;
  std::size_t checkpoint_every = 0;  // 0: only at the end

  /// Desk-scale schedule for the mini model.
  static TrainConfig desk() { return TrainConfig{}; }
  /// batch 32, lr 0.05, 50 epochs, x0.1 after epoch 40.
  static TrainConfig paper();

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr0 before decay_epoch, lr0 * decay_factor from then on.
double lr_at(std::size_t epoch, const TrainConfig& config);

/// v <- momentum*v + grad + weight_decay*w;  w <- w - lr*v
void sgd_step(std::span<Parameter* const> params, double lr, double momentum, double weight_decay);

struct EraseRect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  bool operator==(const EraseRect&) const = default;
};

struct ErasingResult {
  Tensor image;
  std::optional<EraseRect> rect;
};

/// With probability p, fill one random rectangle of a [C,H,W] image with
/// uniform [0,1) noise. Up to 100 attempts; no fit leaves the image intact.
ErasingResult random_erasing(const Tensor& image, RngStream& rng, const RandomErasingParams& params);

Tensor horizontal_flip(const Tensor& image);
/// Zero-pad by `pad` on every side, then crop back at offset (dy, dx) in [0, 2*pad].
Tensor pad_crop(const Tensor& image, std::size_t pad, std::size_t dy, std::size_t dx);

/// flip (p=0.5) -> pad-and-crop -> random erasing, each if switched on.
Tensor augment(const Tensor& image, RngStream& rng, const AugmentSwitches& switches);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double total_loss = 0.0;
  std::vector<double> head_loss;
  std::vector<double> head_accuracy;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  void write_csv(std::ostream& out) const;
};

struct TrainingSet {
  std::vector<Tensor> images;       // each [C,H,W]
  std::vector<std::size_t> labels;  // in [0, num_classes)
};

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

using EpochCallback = std::function<void(const EpochRecord&, EnsembleModel&)>;

/// Minibatch SGD on the joint ensemble loss; batches are drop-last.
TrainLog train(EnsembleModel& model, const TrainingSet& data, const TrainConfig& config,
               const EpochCallback& on_epoch = {});

}  // namespace densemble
