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

#include "densemble/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "densemble/binary_io.hpp"
#include "densemble/errors.hpp"

namespace densemble {

std::string to_string(Metric metric) { return metric == Metric::Euclidean ? "euclidean" : "hamming"; }

Metric parse_metric(const std::string& text) {
  if (text == "euclidean") return Metric::Euclidean;
  if (text == "hamming") return Metric::Hamming;
  throw ConfigError("metric must be euclidean or hamming, got \"" + text + "\"");
}

void FeatureMatrix::validate() const {
  if (values.size() != rows * dim) throw DataError("feature matrix has " + std::to_string(values.size()) +
                                                   " values, expected rows*dim = " + std::to_string(rows * dim));
  if (ids.size() != rows || cams.size() != rows) throw DataError("feature matrix id/cam counts differ from rows");
}

FeatureMatrix extract_features(EnsembleModel& model, std::span<const ReidImage> images,
                               std::span<const std::size_t> heads) {
  if (heads.empty()) throw ConfigError("head subset must not be empty");
  std::vector<std::size_t> sorted(heads.begin(), heads.end());
  std::sort(sorted.begin(), sorted.end());
  const DenseNetConfig& bb = model.config().backbone;
  const Tensor input = stack_images(images, bb.input_height, bb.input_width);
  const Tensor emb = model.embed(input, sorted);
  FeatureMatrix f;
  f.rows = images.size();
  f.dim = emb.dim(1);
  f.values.resize(emb.size());
  for (std::size_t i = 0; i < emb.size(); ++i) f.values[i] = static_cast<float>(emb[i]);
  for (const ReidImage& im : images) {
    f.ids.push_back(static_cast<std::uint32_t>(im.id));
    f.cams.push_back(static_cast<std::uint16_t>(im.cam));
  }
  return f;
}

FeatureMatrix select_heads(const FeatureMatrix& full, std::size_t head_dim, std::span<const std::size_t> heads) {
  if (heads.empty()) throw ConfigError("head subset must not be empty");
  if (head_dim == 0 || full.dim % head_dim != 0)
    throw ConfigError("feature dim " + std::to_string(full.dim) + " is not a multiple of head dim " +
                      std::to_string(head_dim));
  std::vector<std::size_t> sorted(heads.begin(), heads.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t h : sorted)
    if ((h + 1) * head_dim > full.dim) throw ConfigError("head " + std::to_string(h) + " outside the feature matrix");
  FeatureMatrix out;
  out.rows = full.rows;
  out.dim = sorted.size() * head_dim;
  out.ids = full.ids;
  out.cams = full.cams;
  out.values.reserve(out.rows * out.dim);
  for (std::size_t r = 0; r < full.rows; ++r)
    for (std::size_t h : sorted) {
      const float* src = full.values.data() + r * full.dim + h * head_dim;
      out.values.insert(out.values.end(), src, src + head_dim);
    }
  return out;
}

BinaryCodeMatrix quantize(const FeatureMatrix& features) {
  BinaryCodeMatrix codes;
  codes.rows = features.rows;
  codes.dim = features.dim;
  codes.words_per_row = (features.dim + 63) / 64;
  codes.words.assign(codes.rows * codes.words_per_row, 0);
  codes.ids = features.ids;
  codes.cams = features.cams;
  for (std::size_t r = 0; r < features.rows; ++r)
    for (std::size_t b = 0; b < features.dim; ++b)
      if (features.values[r * features.dim + b] >= 0.0f)
        codes.words[r * codes.words_per_row + b / 64] |= std::uint64_t{1} << (b % 64);
  return codes;
}

FeatureMatrix unpack_codes(const BinaryCodeMatrix& codes) {
  FeatureMatrix f;
  f.rows = codes.rows;
  f.dim = codes.dim;
  f.ids = codes.ids;
  f.cams = codes.cams;
  f.values.resize(f.rows * f.dim);
  for (std::size_t r = 0; r < f.rows; ++r)
    for (std::size_t b = 0; b < f.dim; ++b) f.values[r * f.dim + b] = codes.bit(r, b) ? 1.0f : 0.0f;
  return f;
}

std::vector<double> euclidean_dist(std::span<const float> query, const FeatureMatrix& gallery) {
  if (query.size() != gallery.dim)
    throw ConfigError("query dim " + std::to_string(query.size()) + " differs from gallery dim " +
                      std::to_string(gallery.dim));
  std::vector<double> d(gallery.rows);
  for (std::size_t g = 0; g < gallery.rows; ++g) {
    const float* row = gallery.values.data() + g * gallery.dim;
    double acc = 0.0;
    for (std::size_t k = 0; k < gallery.dim; ++k) {
      const double diff = static_cast<double>(query[k]) - static_cast<double>(row[k]);
      acc += diff * diff;
    }
    d[g] = acc;
  }
  return d;
}

std::vector<std::uint32_t> hamming_dist(std::span<const std::uint64_t> query, const BinaryCodeMatrix& gallery) {
  if (query.size() != gallery.words_per_row)
    throw ConfigError("query code has " + std::to_string(query.size()) + " words, gallery rows have " +
                      std::to_string(gallery.words_per_row));
  std::vector<std::uint32_t> d(gallery.rows);
  for (std::size_t g = 0; g < gallery.rows; ++g) {
    const std::uint64_t* row = gallery.words.data() + g * gallery.words_per_row;
    std::uint32_t acc = 0;
    for (std::size_t w = 0; w < gallery.words_per_row; ++w) acc += std::popcount(query[w] ^ row[w]);
    d[g] = acc;
  }
  return d;
}

namespace {

QueryRanking rank_one(std::span<const double> dist, std::uint32_t qid, std::uint16_t qcam,
                      std::span<const std::uint32_t> gallery_ids, std::span<const std::uint16_t> gallery_cams) {
  QueryRanking r;
  for (std::size_t g = 0; g < dist.size(); ++g) {
    if (gallery_ids[g] == 0) continue;
    if (gallery_ids[g] == qid && gallery_cams[g] == qcam) continue;
    r.order.push_back(static_cast<std::uint32_t>(g));
  }
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::uint32_t a, std::uint32_t b) { return dist[a] < dist[b]; });
  r.relevant.reserve(r.order.size());
  for (std::uint32_t g : r.order) r.relevant.push_back(gallery_ids[g] == qid ? 1 : 0);
  r.skipped = std::find(r.relevant.begin(), r.relevant.end(), 1) == r.relevant.end();
  return r;
}

template <typename DistFn>
RankingResult rank_all(std::size_t queries, DistFn&& dist_of, std::span<const std::uint32_t> qids,
                       std::span<const std::uint16_t> qcams, std::span<const std::uint32_t> gids,
                       std::span<const std::uint16_t> gcams) {
  RankingResult result;
  result.queries.resize(queries);
#pragma omp parallel for schedule(dynamic)
  for (long qq = 0; qq < static_cast<long>(queries); ++qq) {
    const auto q = static_cast<std::size_t>(qq);
    const std::vector<double> d = dist_of(q);
    result.queries[q] = rank_one(d, qids[q], qcams[q], gids, gcams);
  }
  for (const QueryRanking& r : result.queries) result.skipped += r.skipped ? 1 : 0;
  return result;
}

}  // namespace

RankingResult rank_from_distances(std::span<const std::vector<double>> distances,
                                  std::span<const std::uint32_t> query_ids, std::span<const std::uint16_t> query_cams,
                                  std::span<const std::uint32_t> gallery_ids,
                                  std::span<const std::uint16_t> gallery_cams) {
  if (distances.size() != query_ids.size() || query_ids.size() != query_cams.size())
    throw DataError("distance rows do not match query ids/cams");
  if (gallery_ids.size() != gallery_cams.size()) throw DataError("gallery ids/cams differ in length");
  for (const auto& row : distances)
    if (row.size() != gallery_ids.size()) throw DataError("distance row length differs from gallery size");
  return rank_all(
      distances.size(), [&](std::size_t q) { return distances[q]; }, query_ids, query_cams, gallery_ids, gallery_cams);
}

RankingResult rank_gallery(const FeatureMatrix& query, const FeatureMatrix& gallery, Metric metric) {
  query.validate();
  gallery.validate();
  if (query.dim != gallery.dim) throw ConfigError("query and gallery feature dims differ");
  if (metric == Metric::Hamming) return rank_gallery(quantize(query), quantize(gallery));
  return rank_all(
      query.rows, [&](std::size_t q) { return euclidean_dist(query.row(q), gallery); }, query.ids, query.cams,
      gallery.ids, gallery.cams);
}

RankingResult rank_gallery(const BinaryCodeMatrix& query, const BinaryCodeMatrix& gallery) {
  if (query.dim != gallery.dim) throw ConfigError("query and gallery code lengths differ");
  return rank_all(
      query.rows,
      [&](std::size_t q) {
        const auto h = hamming_dist(query.row(q), gallery);
        return std::vector<double>(h.begin(), h.end());
      },
      query.ids, query.cams, gallery.ids, gallery.cams);
}

double average_precision(std::span<const std::uint8_t> relevant) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevant.size(); ++k)
    if (relevant[k]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

CmcCurve evaluate(const RankingResult& ranking, std::size_t max_rank) {
  if (max_rank < 1) throw ConfigError("max_rank must be >= 1");
  CmcCurve curve;
  curve.match_rate.assign(max_rank, 0.0);
  std::vector<std::size_t> first_hit_count(max_rank, 0);
  double ap_sum = 0.0;
  for (const QueryRanking& r : ranking.queries) {
    if (r.skipped) {
      ++curve.skipped;
      continue;
    }
    ++curve.scored;
    ap_sum += average_precision(r.relevant);
    const auto first = static_cast<std::size_t>(std::find(r.relevant.begin(), r.relevant.end(), 1) - r.relevant.begin());
    if (first < max_rank) ++first_hit_count[first];
  }
  if (curve.scored == 0) return curve;
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < max_rank; ++k) {
    cumulative += first_hit_count[k];
    curve.match_rate[k] = static_cast<double>(cumulative) / static_cast<double>(curve.scored);
  }
  curve.mean_ap = ap_sum / static_cast<double>(curve.scored);
  return curve;
}

FeatureMatrix combine_features(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) throw ConfigError("nothing to combine");
  FeatureMatrix out;
  out.rows = parts.front().rows;
  out.ids = parts.front().ids;
  out.cams = parts.front().cams;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    parts[p].validate();
    if (parts[p].rows != out.rows || parts[p].ids != out.ids || parts[p].cams != out.cams)
      throw DataError("feature matrix " + std::to_string(p) + " does not share the image order of the first");
    out.dim += parts[p].dim;
  }
  out.values.reserve(out.rows * out.dim);
  for (std::size_t r = 0; r < out.rows; ++r)
    for (const FeatureMatrix& f : parts) {
      const auto row = f.row(r);
      out.values.insert(out.values.end(), row.begin(), row.end());
    }
  return out;
}

namespace {
constexpr char kMagic[] = "FEAT";

void write_header(std::ostream& out, std::size_t rows, std::size_t dim, std::uint8_t kind,
                  std::span<const std::uint32_t> ids, std::span<const std::uint16_t> cams) {
  io::write_magic(out, kMagic);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  io::write_le<std::uint8_t>(out, kind);
  for (std::uint32_t id : ids) io::write_le(out, id);
  for (std::uint16_t c : cams) io::write_le(out, c);
}
}  // namespace

void write_feature_file(const std::string& path, const FeatureMatrix& features) {
  features.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path);
  write_header(out, features.rows, features.dim, 0, features.ids, features.cams);
  for (float v : features.values) io::write_le(out, v);
  if (!out) throw DataError("failed writing feature file " + path);
}

void write_feature_file(const std::string& path, const BinaryCodeMatrix& codes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path);
  write_header(out, codes.rows, codes.dim, 1, codes.ids, codes.cams);
  for (std::uint64_t w : codes.words) io::write_le(out, w);
  if (!out) throw DataError("failed writing feature file " + path);
}

FeatureFile read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path);
  try {
    io::expect_magic(in, kMagic);
    const std::size_t rows = io::read_le<std::uint32_t>(in);
    const std::size_t dim = io::read_le<std::uint32_t>(in);
    const auto kind = io::read_le<std::uint8_t>(in);
    if (kind > 1) throw DataError("unknown feature kind " + std::to_string(kind));
    std::vector<std::uint32_t> ids(rows);
    std::vector<std::uint16_t> cams(rows);
    for (auto& id : ids) id = io::read_le<std::uint32_t>(in);
    for (auto& c : cams) c = io::read_le<std::uint16_t>(in);
    FeatureFile file;
    file.binary = kind == 1;
    if (file.binary) {
      BinaryCodeMatrix& c = file.codes;
      c.rows = rows;
      c.dim = dim;
      c.words_per_row = (dim + 63) / 64;
      c.words.resize(rows * c.words_per_row);
      for (auto& w : c.words) w = io::read_le<std::uint64_t>(in);
      c.ids = std::move(ids);
      c.cams = std::move(cams);
    } else {
      FeatureMatrix& f = file.real;
      f.rows = rows;
      f.dim = dim;
      f.values.resize(rows * dim);
      for (auto& v : f.values) v = io::read_le<float>(in);
      f.ids = std::move(ids);
      f.cams = std::move(cams);
    }
    return file;
  } catch (const DataError& e) {
    throw DataError("feature file " + path + ": " + e.what());
  }
}

void write_cmc_csv(std::ostream& out, const CmcCurve& curve) {
  char buf[64];
  out << "rank,match_rate\n";
  for (std::size_t r = 0; r < curve.match_rate.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g\n", r + 1, curve.match_rate[r]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "mAP,%.10g\n", curve.mean_ap);
  out << buf;
}

void write_ranking_csv(std::ostream& out, const RankingResult& ranking) {
  out << "query,rank,gallery_index\n";
  for (std::size_t q = 0; q < ranking.queries.size(); ++q) {
    const QueryRanking& r = ranking.queries[q];
    if (r.skipped) continue;
    for (std::size_t k = 0; k < r.order.size(); ++k) out << q << ',' << k + 1 << ',' << r.order[k] << '\n';
  }
}

}  // namespace densemble
