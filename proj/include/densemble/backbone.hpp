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

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "densemble/layers.hpp"

namespace densemble {

/// Four-block densely connected backbone.
struct DenseNetConfig {
  std::size_t growth_rate = 8;
  std::array<std::size_t, 4> block_sizes{2, 2, 4, 4};
  std::size_t stem_channels = 16;
  double compression = 0.5;
  std::size_t bottleneck_factor = 4;
  std::size_t input_channels = 3;
  std::size_t input_height = 64;
  std::size_t input_width = 32;

  /// Desk-scale default: k=8, blocks 2/2/4/4, stem 16, 3x64x32 input.
  static DenseNetConfig mini();
  /// DenseNet121 (k=32, blocks 6/12/24/16, stem 64) at 3x384x128.
  static DenseNetConfig densenet121();

  void validate() const;
  bool operator==(const DenseNetConfig&) const = default;
};

/// Channel / spatial bookkeeping derived from a config without running it.
struct BlockGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct BackboneGeometry {
  std::size_t stem_conv_height = 0, stem_conv_width = 0;
  std::array<BlockGeometry, 4> blocks;
  /// transitions[i] follows blocks[i]; out_channels is floor(compression * in).
  std::array<BlockGeometry, 3> transitions;
};

BackboneGeometry describe_backbone(const DenseNetConfig& config);
std::size_t transition_channels(std::size_t in_channels, double compression);

/// BN-ReLU-Conv1x1-BN-ReLU-Conv3x3 producing growth_rate new channels that
/// are appended to the incoming state.
class DenseLayer {
 public:
  DenseLayer(const std::string& name, std::size_t in_channels, std::size_t growth_rate,
             std::size_t bottleneck_factor, RngStream& rng);

  /// Returns concat(state, new_features).
  Tensor forward(const Tensor& state, Mode mode);
  /// grad_output covers in_channels + growth_rate channels; returns grad wrt state.
  Tensor backward(const Tensor& grad_output);

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return in_channels_ + growth_rate_; }
  void collect_parameters(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Tensor*>& out);

 private:
  std::size_t in_channels_;
  std::size_t growth_rate_;
  BatchNorm2d bn1_;
  Relu relu1_;
  Conv2d conv1_;
  BatchNorm2d bn2_;
  Relu relu2_;
  Conv2d conv2_;
};

/// BN-ReLU-Conv1x1 compression followed by 2x2 average pooling, stride 2.
class Transition {
 public:
  Transition(const std::string& name, std::size_t in_channels, double compression, RngStream& rng);

  Tensor forward(const Tensor& input, Mode mode);
  Tensor backward(const Tensor& grad_output);

  std::size_t out_channels() const { return conv_.out_channels(); }
  void collect_parameters(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Tensor*>& out);

 private:
  BatchNorm2d bn_;
  Relu relu_;
  Conv2d conv_;
  Shape conv_out_shape_;
};

/// Activations consumed by the ensemble heads.
struct BackboneTaps {
  Tensor block3_out;                 // block 3 output, before its transition
  std::vector<Tensor> block4_states; // state after each block-4 dense layer
};

/// Upstream gradients for BackboneTaps; empty tensors stand for zero.
struct TapGrads {
  Tensor block3_out;
  std::vector<Tensor> block4_states;
};

class Backbone {
 public:
  Backbone(const DenseNetConfig& config, RngStream& rng);

  BackboneTaps forward(const Tensor& input, Mode mode);
  /// Accumulates parameter gradients and returns the gradient wrt the input.
  Tensor backward(const TapGrads& grads);

  const DenseNetConfig& config() const { return config_; }
  const BackboneGeometry& geometry() const { return geometry_; }
  void collect_parameters(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Tensor*>& out);

 private:
  DenseNetConfig config_;
  BackboneGeometry geometry_;
  Conv2d stem_conv_;
  BatchNorm2d stem_bn_;
  Relu stem_relu_;
  Shape stem_conv_shape_;
  std::array<std::vector<DenseLayer>, 4> blocks_;
  std::vector<Transition> transitions_;
};

}  // namespace densemble
