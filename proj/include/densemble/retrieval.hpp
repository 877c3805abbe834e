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

// Test-time retrieval: concatenated head embeddings, binary codes, gallery
// ranking and CMC / mAP.
//
// Evaluation follows the usual re-identification protocol: for every query,
// gallery entries with the same id and the same camera are ignored, and id 0
// marks junk images that are never ranked.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "densemble/dataio.hpp"
#include "densemble/ensemble.hpp"

namespace densemble {

enum class Metric { Euclidean, Hamming };

std::string to_string(Metric metric);
Metric parse_metric(const std::string& text);

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major rows x dim
  std::vector<std::uint32_t> ids;
  std::vector<std::uint16_t> cams;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  void validate() const;
  bool operator==(const FeatureMatrix&) const = default;
};

/// Bit b of a row lives in word b/64 at bit position b%64; unused high bits
/// of the last word are zero.
struct BinaryCodeMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::size_t words_per_row = 0;
  std::vector<std::uint64_t> words;
  std::vector<std::uint32_t> ids;
  std::vector<std::uint16_t> cams;

  std::span<const std::uint64_t> row(std::size_t i) const {
    return {words.data() + i * words_per_row, words_per_row};
  }
  bool bit(std::size_t i, std::size_t b) const { return (words[i * words_per_row + b / 64] >> (b % 64)) & 1u; }
  bool operator==(const BinaryCodeMatrix&) const = default;
};

/// Eval-mode embeddings of `heads` (0-based, any order is sorted) for each
/// image, concatenated in head order.
FeatureMatrix extract_features(EnsembleModel& model, std::span<const ReidImage> images,
                               std::span<const std::size_t> heads);
/// Columns of the given heads taken from a full all-heads feature matrix.
FeatureMatrix select_heads(const FeatureMatrix& full, std::size_t head_dim, std::span<const std::size_t> heads);

/// bit = 1 iff value >= 0
BinaryCodeMatrix quantize(const FeatureMatrix& features);
/// Codes as a {0,1}-valued real matrix.
FeatureMatrix unpack_codes(const BinaryCodeMatrix& codes);

/// Squared Euclidean distance to every gallery row.
std::vector<double> euclidean_dist(std::span<const float> query, const FeatureMatrix& gallery);
std::vector<std::uint32_t> hamming_dist(std::span<const std::uint64_t> query, const BinaryCodeMatrix& gallery);

struct QueryRanking {
  bool skipped = false;                 // no relevant item survived masking
  std::vector<std::uint32_t> order;     // unmasked gallery indices, nearest first
  std::vector<std::uint8_t> relevant;   // relevant[k] for order[k]
};

struct RankingResult {
  std::vector<QueryRanking> queries;
  std::size_t skipped = 0;
};

/// Masks, sorts ascending by distance with ties broken by gallery index, and
/// marks relevance. rank_from_distances takes one distance row per query.
RankingResult rank_gallery(const FeatureMatrix& query, const FeatureMatrix& gallery, Metric metric);
RankingResult rank_gallery(const BinaryCodeMatrix& query, const BinaryCodeMatrix& gallery);
RankingResult rank_from_distances(std::span<const std::vector<double>> distances,
                                  std::span<const std::uint32_t> query_ids, std::span<const std::uint16_t> query_cams,
                                  std::span<const std::uint32_t> gallery_ids,
                                  std::span<const std::uint16_t> gallery_cams);

/// Mean over relevant hits of precision at that hit's rank. Zero when there
/// are no hits.
double average_precision(std::span<const std::uint8_t> relevant);

struct CmcCurve {
  std::vector<double> match_rate;  // match_rate[r-1] = CMC at rank r
  double mean_ap = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;

  double rank(std::size_t r) const { return match_rate.at(r - 1); }
};

CmcCurve evaluate(const RankingResult& ranking, std::size_t max_rank);

/// Row-wise concatenation of several models' features for the same images.
FeatureMatrix combine_features(std::span<const FeatureMatrix> parts);

/// Feature file: "FEAT", u32 rows, u32 dim, u8 kind (0 f32, 1 packed bits),
/// u32 ids, u16 cams, then f32 rows or u64 words.
void write_feature_file(const std::string& path, const FeatureMatrix& features);
void write_feature_file(const std::string& path, const BinaryCodeMatrix& codes);

struct FeatureFile {
  bool binary = false;
  FeatureMatrix real;
  BinaryCodeMatrix codes;
};
FeatureFile read_feature_file(const std::string& path);

/// "rank,match_rate" rows followed by "mAP,<value>".
void write_cmc_csv(std::ostream& out, const CmcCurve& curve);
/// "query,rank,gallery_index" for every unskipped query.
void write_ranking_csv(std::ostream& out, const RankingResult& ranking);

}  // namespace densemble
