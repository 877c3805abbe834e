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

#include "densemble/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "densemble/binary_io.hpp"
#include "densemble/errors.hpp"

namespace densemble {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size())
    throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " + std::to_string(values_.size()) +
                      " values");
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size())
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), values_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_)
    throw ConfigError("shape mismatch in +=: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

void write_tensor(std::ostream& out, const Tensor& t, Precision precision) {
  io::write_magic(out, "DTNS");
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(precision));
  for (double v : t.values()) {
    if (precision == Precision::F32)
      io::write_le<float>(out, static_cast<float>(v));
    else
      io::write_le<double>(out, v);
  }
}

Tensor read_tensor(std::istream& in) {
  io::expect_magic(in, "DTNS");
  const auto rank = io::read_le<std::uint32_t>(in);
  if (rank > 8) throw DataError("tensor rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  for (auto& d : shape) d = io::read_le<std::uint32_t>(in);
  const auto flag = io::read_le<std::uint8_t>(in);
  if (flag > 1) throw DataError("unknown tensor precision flag " + std::to_string(flag));
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = flag == 0 ? static_cast<double>(io::read_le<float>(in)) : io::read_le<double>(in);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace densemble
