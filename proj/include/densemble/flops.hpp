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

// Static cost model. The unit is the multiply-accumulate (MAC), which is
// what "FLOPs" usually denotes for CNN backbones; batchnorm, activations,
// pooling and concatenation cost nothing. Costs are per image.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "densemble/ensemble.hpp"

namespace densemble {

/// kind: conv | linear | batchnorm | relu | tanh | avgpool | gap | flatten.
/// conv uses out/kernel/stride/pad; avgpool uses kernel as window and stride;
/// linear uses out.
struct LayerSpec {
  std::string kind;
  std::size_t out = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

struct LayerCost {
  Shape output;  // without the batch axis
  std::uint64_t macs = 0;
};

/// `input` is [C,H,W] for spatial layers and [D] for linear.
LayerCost count_layer(const LayerSpec& layer, const Shape& input);

struct FlopRecord {
  std::string name;
  std::string kind;
  Shape output;
  std::uint64_t macs = 0;
  bool shared = true;
};

struct FlopReport {
  std::vector<FlopRecord> records;
  std::uint64_t shared_macs = 0;
  std::uint64_t head_macs = 0;
  std::uint64_t total_macs = 0;
  double shared_fraction = 0.0;

  void write_table(std::ostream& out) const;
  /// name,kind,output_shape,macs,shared rows, then total rows.
  void write_csv(std::ostream& out) const;
};

/// Backbone plus the embedding layer of every selected head (0-based). The
/// classifiers are training-only and not counted.
FlopReport count_model(const EnsembleConfig& config, std::span<const std::size_t> heads);
FlopReport count_model(const EnsembleConfig& config);

/// Single-head comparator: backbone, global average pooling and one
/// fully connected embedding of `embedding_dim`.
FlopReport count_baseline(const DenseNetConfig& backbone, std::size_t embedding_dim = 1024);

}  // namespace densemble
