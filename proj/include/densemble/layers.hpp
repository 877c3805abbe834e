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

// Layer primitives as explicit forward/backward function pairs, plus thin
// stateful wrappers that own parameters and cache what backward needs.
//
// Backward functions never mutate their cached inputs, so backward may be
// called several times after one forward (used by the per-head gradient
// decomposition checks).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "densemble/rng.hpp"
#include "densemble/tensor.hpp"

namespace densemble {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, no bias.

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t pad);
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output, std::size_t stride,
                            std::size_t pad);

// ---------------------------------------------------------------------------
// batchnorm over (N, H, W) per channel.

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormState {
  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}
  Tensor running_mean;
  Tensor running_var;
};

struct BatchNormCache {
  Tensor normalized;            // x_hat
  std::vector<double> inv_std;  // per channel
  Mode mode = Mode::Train;
};

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

/// Train mode normalizes with biased batch statistics and folds them into
/// `state` (running variance uses the unbiased estimate). Eval mode reads
/// `state` only. `cache` may be null when no backward pass follows.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                 BatchNormCache* cache, double eps = kBatchNormEps, double momentum = kBatchNormMomentum);
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& grad_output);

// ---------------------------------------------------------------------------
// elementwise activations

Tensor relu(const Tensor& input);

/// Fingerprint of which relu inputs were positive, in call order. Gradient
/// checks compare fingerprints of the +h and -h evaluations to spot steps
/// that straddle a kink.
class ReluPatternProbe {
 public:
  void absorb(const Tensor& input);
  std::uint64_t digest() const { return hash_ ^ count_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ull;
  std::uint64_t count_ = 0;
};

/// Installs a process-wide probe fed by every relu() call; nullptr removes it.
/// Not for use while other threads run the network.
void set_relu_probe(ReluPatternProbe* probe);
/// d/dx relu at 0 is taken as 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);
Tensor tanh_act(const Tensor& input);
Tensor tanh_backward(const Tensor& output, const Tensor& grad_output);

// ---------------------------------------------------------------------------
// linear: y = x W^T + b

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output);

// ---------------------------------------------------------------------------
// average pooling

Tensor avgpool2d(const Tensor& input, std::size_t window, std::size_t stride);
Tensor avgpool2d_backward(const Shape& input_shape, const Tensor& grad_output, std::size_t window,
                          std::size_t stride);

// ---------------------------------------------------------------------------
// channel plumbing

Tensor concat_channels(std::span<const Tensor> inputs);
std::vector<Tensor> split_channels(const Tensor& input, std::span<const std::size_t> widths);
/// Channels [begin, end) of an NCHW tensor.
Tensor channel_slice(const Tensor& input, std::size_t begin, std::size_t end);
/// dst[:, begin:begin+src.C] += src
void add_channel_slice(Tensor& dst, const Tensor& src, std::size_t begin);

// ---------------------------------------------------------------------------
// loss

struct CrossEntropyResult {
  std::vector<double> losses;  // one per sample
  Tensor grad_logits;          // softmax - onehot, not divided by N
};

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// ---------------------------------------------------------------------------
// Stateful modules. backward() accumulates into the owned Parameter::grad and
// returns the gradient with respect to the last forward input.

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t pad, RngStream& rng);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  void collect_parameters(std::vector<Parameter*>& out) { out.push_back(&weight_); }

  std::size_t in_channels() const { return weight_.value.dim(1); }
  std::size_t out_channels() const { return weight_.value.dim(0); }
  std::size_t kernel() const { return weight_.value.dim(2); }
  std::size_t stride() const { return stride_; }
  std::size_t pad() const { return pad_; }
  Parameter& weight() { return weight_; }

 private:
  Parameter weight_;
  std::size_t stride_ = 1;
  std::size_t pad_ = 0;
  Tensor input_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, std::size_t channels);

  Tensor forward(const Tensor& input, Mode mode);
  Tensor backward(const Tensor& grad_output);
  void collect_parameters(std::vector<Parameter*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<Tensor*>& out) {
    out.push_back(&state_.running_mean);
    out.push_back(&state_.running_var);
  }
  std::size_t channels() const { return gamma_.value.size(); }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  BatchNormState& state() { return state_; }

 private:
  Parameter gamma_;
  Parameter beta_;
  BatchNormState state_;
  BatchNormCache cache_;
};

class Relu {
 public:
  Tensor forward(const Tensor& input) {
    input_ = input;
    return relu(input);
  }
  Tensor backward(const Tensor& grad_output) const { return relu_backward(input_, grad_output); }

 private:
  Tensor input_;
};

class Linear {
 public:
  Linear() = default;
  /// Weights ~ N(0, init_std^2), bias zero.
  Linear(std::string name, std::size_t in_features, std::size_t out_features, double init_std, RngStream& rng);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_output);
  void collect_parameters(std::vector<Parameter*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

}  // namespace densemble
