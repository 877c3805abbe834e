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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "densemble/tensor.hpp"
#include "densemble/trainer.hpp"

namespace densemble {

struct ReidImage {
  Tensor image;  // [3,H,W], values in [0,1]
  std::size_t id = 0;
  std::size_t cam = 0;
  std::size_t index = 0;
};

/// Train identities never appear in query/gallery. Ids are 1-based; id 0 is
/// reserved for junk images.
struct ReidDataset {
  std::vector<ReidImage> train;
  std::vector<ReidImage> query;
  std::vector<ReidImage> gallery;

  /// Checks id disjointness and that every query has a cross-camera match.
  void validate() const;
};

struct SyntheticSpec {
  std::size_t n_train_ids = 20;
  std::size_t n_test_ids = 10;
  std::size_t views_per_id = 8;
  std::size_t n_cams = 2;
  std::size_t height = 64;
  std::size_t width = 32;
  std::uint64_t seed = 1;

  bool operator==(const SyntheticSpec&) const = default;
};

/// Each identity is a fixed set of garment colours, 2-4 coloured patches and
/// a stripe texture drawn on a person silhouette. Views vary brightness,
/// horizontal position and noise, and each camera adds a colour cast. View v
/// of an identity is seen by camera (v mod n_cams)+1; for test identities the
/// first view of each camera becomes a query and the rest form the gallery.
/// Pixels are quantized to 8 bits.
ReidDataset generate_synthetic(const SyntheticSpec& spec);

struct ImageName {
  std::size_t id = 0;
  std::size_t cam = 0;
  std::size_t index = 0;
};

/// "<id>_c<cam>_<idx>.ppm"
ImageName parse_image_name(const std::string& filename);
std::string format_image_name(std::size_t id, std::size_t cam, std::size_t index);

/// Binary P6, maxval 255.
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);

/// Writes root/{train,query,gallery}/<id>_c<cam>_<idx>.ppm.
void save_dataset(const ReidDataset& dataset, const std::string& root);
/// Reads the layout written by save_dataset, each partition sorted by filename.
ReidDataset load_dataset(const std::string& root);

/// Bilinear resize of a [C,H,W] image. Corner-aligned: output pixel (y, x)
/// samples the input at (y*(H_in-1)/(H_out-1), x*(W_in-1)/(W_out-1)), so the
/// four corners map exactly onto the input corners.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

/// Stacks images into [N,C,H,W], resizing those that differ from (height, width).
Tensor stack_images(std::span<const ReidImage> images, std::size_t height, std::size_t width);

/// Maps the sorted distinct train ids onto contiguous class labels.
TrainingSet make_training_set(std::span<const ReidImage> train, std::size_t height, std::size_t width,
                              std::map<std::size_t, std::size_t>* label_of_id = nullptr);

}  // namespace densemble
