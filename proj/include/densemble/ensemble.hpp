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

// End-to-end ensemble of 2L base learners on a shared dense backbone.
//
// Heads 0..L-1 read contiguous channel groups of the block-3 output; heads
// L..2L-1 read block-4 activations after the dense layers listed in
// block4_attach. Every head flattens its tap without pooling, then applies
// a fully connected tanh embedding and a linear classifier.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "densemble/backbone.hpp"

namespace densemble {

/// Which activation feeds the block-3 head family.
enum class Block3Tap {
  PreTransition,   // block 3 output, full resolution
  PostTransition,  // after the block 3 -> 4 transition (block 4 input)
};

/// Which activation feeds the block-4 head family.
enum class Block4Tap {
  State,        // running concatenation after the dense layer
  LayerOutput,  // only the growth_rate channels that layer produced
};

std::string to_string(Block3Tap tap);
std::string to_string(Block4Tap tap);
Block3Tap parse_block3_tap(const std::string& text);
Block4Tap parse_block4_tap(const std::string& text);

struct EnsembleConfig {
  DenseNetConfig backbone = DenseNetConfig::mini();
  std::size_t heads_per_family = 4;  // L; the ensemble has 2L heads
  std::size_t embedding_dim = 64;
  std::size_t num_classes = 20;
  /// 1-based block-4 dense layer indices; empty selects ceil(i*n4/L), i=1..L.
  std::vector<std::size_t> block4_attach;
  Block3Tap block3_tap = Block3Tap::PreTransition;
  Block4Tap block4_tap = Block4Tap::State;
  double head_init_std = 0.001;

  std::size_t num_heads() const { return 2 * heads_per_family; }
  std::vector<std::size_t> resolved_attach() const;
  void validate() const;

  /// 2L=8 heads of width 64 on the mini backbone.
  static EnsembleConfig mini();
  /// DenseNet121 at 384x128 with narrow taps: post-transition block-3 splits
  /// and per-layer block-4 outputs.
  static EnsembleConfig paper(std::size_t heads_per_family = 8, std::size_t embedding_dim = 512,
                              std::size_t num_classes = 751);

  bool operator==(const EnsembleConfig&) const = default;
};

/// Where a head reads from; all taps are channel ranges of a backbone tensor.
struct TapSpec {
  enum class Source { Block3Out, Block4State };
  Source source = Source::Block3Out;
  std::size_t state_index = 0;  // into BackboneTaps::block4_states
  std::size_t channel_begin = 0;
  std::size_t channel_end = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t channels() const { return channel_end - channel_begin; }
  std::size_t flatten_dim() const { return channels() * height * width; }
};

std::vector<TapSpec> head_taps(const EnsembleConfig& config);

/// Group g gets floor(C/L) channels; the last group also takes the remainder.
std::vector<std::size_t> split_widths(std::size_t channels, std::size_t groups);
std::vector<Tensor> split_channel_groups(const Tensor& feature_map, std::size_t groups);

struct BaseLearnerOutput {
  Tensor embedding;  // [N, H], post-tanh
  Tensor logits;     // [N, C]
};

/// Flatten -> Linear -> tanh -> Linear.
class SubNetwork {
 public:
  SubNetwork(const std::string& name, std::size_t flatten_dim, std::size_t embedding_dim, std::size_t num_classes,
             double init_std, RngStream& rng);

  BaseLearnerOutput forward(const Tensor& tap);
  /// Returns the gradient wrt the tap (same shape as the forward input).
  Tensor backward(const Tensor& grad_logits);

  void collect_parameters(std::vector<Parameter*>& out);

 private:
  Linear embedding_;
  Linear classifier_;
  Shape tap_shape_;
  Tensor embedding_out_;
};

struct EnsembleLoss {
  double total = 0.0;             // batch mean of the weighted per-head sum
  std::vector<double> per_head;   // batch mean, unweighted
  std::vector<double> accuracy;   // per-head top-1 on this batch
  std::vector<Tensor> grad_logits;
};

/// Sum over heads of softmax cross-entropy, averaged over the batch. Empty
/// `head_weights` means 1 for every head.
EnsembleLoss ensemble_loss(std::span<const BaseLearnerOutput> outputs, std::span<const std::size_t> labels,
                           std::span<const double> head_weights = {});

class EnsembleModel {
 public:
  EnsembleModel(const EnsembleConfig& config, std::uint64_t seed);

  std::vector<BaseLearnerOutput> forward(const Tensor& input, Mode mode);
  /// Backpropagates per-head logit gradients (from ensemble_loss). Shared
  /// backbone grads accumulate the contribution of every head; each head's
  /// own parameters see only its gradient. Returns the input gradient.
  Tensor backward(std::span<const Tensor> grad_logits);

  /// Eval-mode embeddings of the selected heads concatenated in the given order,
  /// processed in chunks of `chunk` images.
  Tensor embed(const Tensor& input, std::span<const std::size_t> heads, std::size_t chunk = 64);

  const EnsembleConfig& config() const { return config_; }
  const std::vector<TapSpec>& taps() const { return taps_; }

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> shared_parameters();
  std::vector<Parameter*> head_parameters(std::size_t head);
  std::vector<Tensor*> buffers();
  void zero_grad();

  /// Checkpoint: u32-length-prefixed config text, then u32 count + every
  /// parameter tensor (backbone, then heads 0..2L-1), then u32 count + the
  /// batchnorm running statistics.
  void save(const std::string& path);
  static EnsembleModel load(const std::string& path);

 private:
  EnsembleConfig config_;
  std::vector<TapSpec> taps_;
  Backbone backbone_;
  std::vector<SubNetwork> heads_;
};

}  // namespace densemble
