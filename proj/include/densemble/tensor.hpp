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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace densemble {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/**
 * Dense row-major array of doubles. Four-dimensional tensors use NCHW layout,
 * the last axis varies fastest.
 */
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return values_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(double value);
  /// Same values under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  /// Elementwise `this += other`; shapes must match.
  Tensor& operator+=(const Tensor& other);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Trainable tensor with its gradient accumulator and SGD momentum buffer.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name(std::move(name)),
        value(std::move(value)),
        grad(Tensor::zeros_like(this->value)),
        momentum(Tensor::zeros_like(this->value)) {}

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor momentum;
};

enum class Precision : unsigned char { F32 = 0, F64 = 1 };

/// Binary tensor record: "DTNS", u32 rank, u32 extents, u8 precision flag,
/// then the raw little-endian values.
void write_tensor(std::ostream& out, const Tensor& t, Precision precision = Precision::F64);
Tensor read_tensor(std::istream& in);

}  // namespace densemble
