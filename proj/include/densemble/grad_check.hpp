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

// Central finite-difference verification of analytic gradients.
//
// A check perturbs one coordinate at a time by +-step and compares
// (L(x+h) - L(x-h)) / 2h with the analytic gradient. L is given as a list of
// terms; the difference is taken term by term before summing, so terms that
// do not depend on the perturbed coordinate cancel exactly instead of adding
// rounding noise proportional to |L|.
//
// Relu is not differentiable at 0. When the +h and -h evaluations disagree
// on the sign pattern of any relu input, the secant straddles a kink and is
// no oracle for the derivative; such coordinates are counted in
// kink_skipped instead of being scored.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "densemble/ensemble.hpp"

namespace densemble {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coords = 0;  // per tensor; 0 checks every coordinate
  std::uint64_t seed = 0;      // coordinate sampling
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::string name;
  std::string detail;  // shapes / hyper-parameters that were drawn
  std::size_t coords = 0;        // coordinates scored
  std::size_t kink_skipped = 0;  // +-h evaluations saw different relu patterns
  double max_rel_error = 0.0;
  GradCheckEntry worst;
};

/// |a-b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

struct GradVariable {
  std::string name;
  Tensor* value;
  const Tensor* analytic;
};

using LossTerms = std::function<std::vector<double>()>;

GradCheckReport check_gradients(const std::string& name, const LossTerms& terms, std::span<const GradVariable> vars,
                                const GradCheckOptions& options = {});

/// conv2d, linear, batchnorm_train, batchnorm_eval, relu, tanh, avgpool,
/// concat, channel_slice, softmax_ce, ensemble_loss, dense_layer,
/// transition, subnetwork.
const std::vector<std::string>& primitive_kinds();

/// Draws shapes and values from `seed`, builds the probe loss sum(y * R)
/// with a fixed random R (or the loss itself for the loss primitives), and
/// checks every input and parameter.
GradCheckReport check_primitive(const std::string& kind, std::uint64_t seed, const GradCheckOptions& options = {});

/// Whole model: batch of `batch` random images, random labels, joint loss.
/// Input and every parameter tensor are checked.
GradCheckReport check_model(const EnsembleConfig& config, std::uint64_t seed, std::size_t batch = 2,
                            const GradCheckOptions& options = {});

}  // namespace densemble
