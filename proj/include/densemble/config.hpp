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

// Experiment configuration: UTF-8 text of `key = value` lines grouped under
// `[section]` headers. '#' and ';' start comments. Unknown sections or keys
// are rejected with the offending line named.

#include <cstddef>
#include <string>
#include <vector>

#include "densemble/dataio.hpp"
#include "densemble/ensemble.hpp"
#include "densemble/retrieval.hpp"
#include "densemble/trainer.hpp"

namespace densemble {

struct IniEntry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// `origin` names the source in error messages.
std::vector<IniEntry> parse_ini(const std::string& text, const std::string& origin = "config");

struct DataConfig {
  std::string root;  // empty: generate the synthetic set in memory
  SyntheticSpec synthetic;
  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  Metric metric = Metric::Euclidean;
  std::string heads = "all";
  std::size_t max_rank = 20;
  bool operator==(const EvalConfig&) const = default;
};

struct ExperimentConfig {
  std::string profile_name = "mini";
  EnsembleConfig model = EnsembleConfig::mini();  // num_classes 0: derive from training ids
  TrainConfig train = TrainConfig::desk();
  DataConfig data;
  EvalConfig eval;
  std::string output_dir = "out";
  std::size_t threads = 0;  // 0: OpenMP default

  /// "mini", "paper" or "densenet121-full" (alias of "paper").
  static ExperimentConfig profile(const std::string& name);

  /// Applies entries in order; a top-level `profile = <name>` must come first.
  void apply(const std::vector<IniEntry>& entries);
  void set(const std::string& section, const std::string& key, const std::string& value);
  void validate() const;
  /// Fully resolved config; parse_ini + apply on a fresh profile round-trips it.
  std::string to_text() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Reads `path`, starting from the profile it names (default "mini").
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig experiment_config_from_text(const std::string& text, const std::string& origin = "config");

/// [backbone] and [ensemble] sections only; used in checkpoint headers.
std::string model_config_text(const EnsembleConfig& config);
EnsembleConfig parse_model_config_text(const std::string& text);

/// "1,2, 3" -> {1,2,3}; empty string -> {}.
std::vector<std::size_t> parse_size_list(const std::string& text);

/// "all", or a comma list of 0-based indices and inclusive ranges "a-b".
/// Result is sorted and deduplicated.
std::vector<std::size_t> parse_head_list(const std::string& text, std::size_t num_heads);

}  // namespace densemble
