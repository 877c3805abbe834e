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

#include "densemble/backbone.hpp"

#include <cmath>

#include "densemble/errors.hpp"

namespace densemble {

DenseNetConfig DenseNetConfig::mini() { return DenseNetConfig{}; }

DenseNetConfig DenseNetConfig::densenet121() {
  DenseNetConfig c;
  c.growth_rate = 32;
  c.block_sizes = {6, 12, 24, 16};
  c.stem_channels = 64;
  c.compression = 0.5;
  c.bottleneck_factor = 4;
  c.input_channels = 3;
  c.input_height = 384;
  c.input_width = 128;
  return c;
}

void DenseNetConfig::validate() const {
  if (growth_rate < 1) throw ConfigError("backbone.growth_rate must be >= 1");
  for (std::size_t i = 0; i < block_sizes.size(); ++i)
    if (block_sizes[i] < 1) throw ConfigError("backbone.block_sizes[" + std::to_string(i) + "] must be >= 1");
  if (stem_channels < 1) throw ConfigError("backbone.stem_channels must be >= 1");
  if (!(compression > 0.0 && compression <= 1.0))
    throw ConfigError("backbone.compression must lie in (0, 1], got " + std::to_string(compression));
  if (bottleneck_factor < 1) throw ConfigError("backbone.bottleneck_factor must be >= 1");
  if (input_channels < 1 || input_height < 1 || input_width < 1)
    throw ConfigError("backbone input dims must be positive");
  describe_backbone(*this);
}

std::size_t transition_channels(std::size_t in_channels, double compression) {
  const auto c = static_cast<std::size_t>(std::floor(compression * static_cast<double>(in_channels)));
  if (c < 1)
    throw ConfigError("transition: compression " + std::to_string(compression) + " of " +
                      std::to_string(in_channels) + " channels leaves none");
  return c;
}

namespace {
std::size_t halve(std::size_t extent, const std::string& where) {
  if (extent < 2 || extent % 2 != 0)
    throw ConfigError(where + ": spatial extent " + std::to_string(extent) + " must be even for 2x2 pooling");
  return extent / 2;
}
}  // namespace

BackboneGeometry describe_backbone(const DenseNetConfig& config) {
  BackboneGeometry g;
  g.stem_conv_height = conv_output_extent(config.input_height, 7, 2, 3);
  g.stem_conv_width = conv_output_extent(config.input_width, 7, 2, 3);
  std::size_t h = halve(g.stem_conv_height, "stem pool");
  std::size_t w = halve(g.stem_conv_width, "stem pool");
  std::size_t c = config.stem_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    BlockGeometry& blk = g.blocks[b];
    blk.in_channels = c;
    blk.out_channels = c + config.block_sizes[b] * config.growth_rate;
    blk.height = h;
    blk.width = w;
    c = blk.out_channels;
    if (b < 3) {
      BlockGeometry& tr = g.transitions[b];
      tr.in_channels = c;
      tr.out_channels = transition_channels(c, config.compression);
      tr.height = halve(h, "transition " + std::to_string(b + 1));
      tr.width = halve(w, "transition " + std::to_string(b + 1));
      c = tr.out_channels;
      h = tr.height;
      w = tr.width;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(const std::string& name, std::size_t in_channels, std::size_t growth_rate,
                       std::size_t bottleneck_factor, RngStream& rng)
    : in_channels_(in_channels),
      growth_rate_(growth_rate),
      bn1_(name + ".bn1", in_channels),
      conv1_(name + ".conv1", in_channels, bottleneck_factor * growth_rate, 1, 1, 0, rng),
      bn2_(name + ".bn2", bottleneck_factor * growth_rate),
      conv2_(name + ".conv2", bottleneck_factor * growth_rate, growth_rate, 3, 1, 1, rng) {}

Tensor DenseLayer::forward(const Tensor& state, Mode mode) {
  if (state.rank() != 4 || state.dim(1) != in_channels_)
    throw ConfigError("dense layer expects " + std::to_string(in_channels_) + " input channels, got " +
                      shape_string(state.shape()));
  Tensor t = bn1_.forward(state, mode);
  t = relu1_.forward(t);
  t = conv1_.forward(t);
  t = bn2_.forward(t, mode);
  t = relu2_.forward(t);
  t = conv2_.forward(t);
  const Tensor parts[] = {state, t};
  return concat_channels(parts);
}

Tensor DenseLayer::backward(const Tensor& grad_output) {
  Tensor grad_state = channel_slice(grad_output, 0, in_channels_);
  Tensor g = channel_slice(grad_output, in_channels_, in_channels_ + growth_rate_);
  g = conv2_.backward(g);
  g = relu2_.backward(g);
  g = bn2_.backward(g);
  g = conv1_.backward(g);
  g = relu1_.backward(g);
  g = bn1_.backward(g);
  grad_state += g;
  return grad_state;
}

void DenseLayer::collect_parameters(std::vector<Parameter*>& out) {
  bn1_.collect_parameters(out);
  conv1_.collect_parameters(out);
  bn2_.collect_parameters(out);
  conv2_.collect_parameters(out);
}

void DenseLayer::collect_buffers(std::vector<Tensor*>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
}

Transition::Transition(const std::string& name, std::size_t in_channels, double compression, RngStream& rng)
    : bn_(name + ".bn", in_channels),
      conv_(name + ".conv", in_channels, transition_channels(in_channels, compression), 1, 1, 0, rng) {}

Tensor Transition::forward(const Tensor& input, Mode mode) {
  Tensor t = bn_.forward(input, mode);
  t = relu_.forward(t);
  t = conv_.forward(t);
  conv_out_shape_ = t.shape();
  return avgpool2d(t, 2, 2);
}

Tensor Transition::backward(const Tensor& grad_output) {
  Tensor g = avgpool2d_backward(conv_out_shape_, grad_output, 2, 2);
  g = conv_.backward(g);
  g = relu_.backward(g);
  return bn_.backward(g);
}

void Transition::collect_parameters(std::vector<Parameter*>& out) {
  bn_.collect_parameters(out);
  conv_.collect_parameters(out);
}

void Transition::collect_buffers(std::vector<Tensor*>& out) { bn_.collect_buffers(out); }

// ---------------------------------------------------------------------------

Backbone::Backbone(const DenseNetConfig& config, RngStream& rng)
    : config_(config), geometry_(describe_backbone(config)) {
  config_.validate();
  stem_conv_ = Conv2d("stem.conv", config.input_channels, config.stem_channels, 7, 2, 3, rng);
  stem_bn_ = BatchNorm2d("stem.bn", config.stem_channels);
  for (std::size_t b = 0; b < 4; ++b) {
    std::size_t c = geometry_.blocks[b].in_channels;
    for (std::size_t i = 0; i < config.block_sizes[b]; ++i) {
      const std::string name = "block" + std::to_string(b + 1) + ".layer" + std::to_string(i + 1);
      blocks_[b].emplace_back(name, c, config.growth_rate, config.bottleneck_factor, rng);
      c = blocks_[b].back().out_channels();
    }
    if (c != geometry_.blocks[b].out_channels) throw ConfigError("channel recurrence violated in block " + std::to_string(b + 1));
    if (b < 3) {
      transitions_.emplace_back("transition" + std::to_string(b + 1), c, config.compression, rng);
      if (transitions_.back().out_channels() != geometry_.transitions[b].out_channels)
        throw ConfigError("channel recurrence violated in transition " + std::to_string(b + 1));
    }
  }
}

BackboneTaps Backbone::forward(const Tensor& input, Mode mode) {
  const Shape expected{input.rank() == 4 ? input.dim(0) : 0, config_.input_channels, config_.input_height,
                       config_.input_width};
  if (input.shape() != expected)
    throw ConfigError("backbone input " + shape_string(input.shape()) + " does not match configured " +
                      shape_string(expected));
  Tensor t = stem_conv_.forward(input);
  t = stem_bn_.forward(t, mode);
  t = stem_relu_.forward(t);
  stem_conv_shape_ = t.shape();
  t = avgpool2d(t, 2, 2);

  BackboneTaps taps;
  for (std::size_t b = 0; b < 4; ++b) {
    for (DenseLayer& layer : blocks_[b]) {
      t = layer.forward(t, mode);
      if (b == 3) taps.block4_states.push_back(t);
    }
    if (b == 2) taps.block3_out = t;
    if (b < 3) t = transitions_[b].forward(t, mode);
  }
  return taps;
}

Tensor Backbone::backward(const TapGrads& grads) {
  auto& block4 = blocks_[3];
  if (!grads.block4_states.empty() && grads.block4_states.size() != block4.size())
    throw ConfigError("backbone backward: expected " + std::to_string(block4.size()) + " block-4 gradients");

  // Walk block 4 from its last state down, folding in tap gradients.
  Tensor g;
  for (std::size_t i = block4.size(); i-- > 0;) {
    const Tensor* tap = grads.block4_states.empty() || grads.block4_states[i].empty() ? nullptr
                                                                                      : &grads.block4_states[i];
    if (g.empty()) {
      g = tap ? *tap : Tensor();
    } else if (tap) {
      g += *tap;
    }
    if (g.empty()) continue;
    g = block4[i].backward(g);
  }
  // g is now the gradient wrt the block-3 transition output (or empty).
  if (!g.empty()) g = transitions_[2].backward(g);
  if (!grads.block3_out.empty()) {
    if (g.empty())
      g = grads.block3_out;
    else
      g += grads.block3_out;
  }
  if (g.empty()) throw ConfigError("backbone backward called without any tap gradient");

  for (std::size_t b = 3; b-- > 0;) {
    for (std::size_t i = blocks_[b].size(); i-- > 0;) g = blocks_[b][i].backward(g);
    if (b > 0) g = transitions_[b - 1].backward(g);
  }
  g = avgpool2d_backward(stem_conv_shape_, g, 2, 2);
  g = stem_relu_.backward(g);
  g = stem_bn_.backward(g);
  return stem_conv_.backward(g);
}

void Backbone::collect_parameters(std::vector<Parameter*>& out) {
  stem_conv_.collect_parameters(out);
  stem_bn_.collect_parameters(out);
  for (std::size_t b = 0; b < 4; ++b) {
    for (DenseLayer& layer : blocks_[b]) layer.collect_parameters(out);
    if (b < 3) transitions_[b].collect_parameters(out);
  }
}

void Backbone::collect_buffers(std::vector<Tensor*>& out) {
  stem_bn_.collect_buffers(out);
  for (std::size_t b = 0; b < 4; ++b) {
    for (DenseLayer& layer : blocks_[b]) layer.collect_buffers(out);
    if (b < 3) transitions_[b].collect_buffers(out);
  }
}

}  // namespace densemble
