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

// Subcommands of the `densemble` tool. Each takes resolved options, prints a
// human-readable summary to `out` and writes its artifacts. Errors surface as
// ConfigError or DataError; the tool maps them to exit codes 1 and 2.
//
// Every output directory receives `config.ini` (the resolved settings) and
// `run.txt` (tool version, command and seed).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "densemble/config.hpp"
#include "densemble/flops.hpp"

namespace densemble {

std::string tool_version();

/// Writes config.ini and run.txt into `dir`, creating it.
void write_run_files(const std::string& dir, const std::string& command, const std::string& config_text,
                     std::uint64_t seed);

/// root/{train,query,gallery}/ from config.data.synthetic.
void cmd_gen_data(const ExperimentConfig& config, const std::string& root, std::ostream& out);

/// output_dir/{train_log.csv, model.bin}; model_epoch<N>.bin every
/// train.checkpoint_every epochs when that is non-zero.
void cmd_train(const ExperimentConfig& config, std::ostream& out);

struct ExtractOptions {
  std::vector<std::string> models;
  DataConfig data;
  std::string heads = "all";
  bool combine = false;  // required when more than one model is given
  bool binary = false;   // also write quantized codes
  std::string out_dir = "features";
};

/// out_dir/{query,gallery}.feat (+ {query,gallery}.bits.feat) and
/// features.ini recording the per-head width.
void cmd_extract(const ExtractOptions& options, std::ostream& out);

struct EvalOptions {
  std::string query;
  std::string gallery;
  Metric metric = Metric::Euclidean;
  std::string heads = "all";
  std::size_t head_dim = 0;  // 0: read features.ini next to `query`, if any
  std::size_t max_rank = 20;
  std::string out_dir = "eval";
};

/// Prints Rank-1/5/10 and mAP for the selected heads, then per-head and
/// cumulative scores when the head width is known. Writes cmc.csv,
/// ranking.csv and heads.csv ("kind,heads,rank1,rank5,rank10,mAP").
void cmd_eval(const EvalOptions& options, std::ostream& out);

struct FlopsOptions {
  std::string profile = "densenet121-full";
  std::string heads = "all";
  bool baseline = false;  // single gAP head of width 1024 instead of the ensemble
  bool csv = false;
};

FlopReport cmd_flops(const FlopsOptions& options, std::ostream& out);

struct GradCheckCommand {
  std::size_t seeds = 20;        // per primitive
  std::size_t model_seeds = 20;  // full mini model
  std::size_t model_coords = 1;  // sampled coordinates per model tensor
  std::size_t model_batch = 4;
  double primitive_tol = 1e-5;
  double model_tol = 1e-4;
};

/// Returns true when every check is within tolerance.
bool cmd_grad_check(const GradCheckCommand& options, std::ostream& out);

struct SweepOptions {
  ExperimentConfig base;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::size_t> heads_per_family;  // empty: base value
  std::vector<std::size_t> embedding_dims;    // empty: base value
  std::string out_dir = "sweep";
};

/// One training run per (L, H, seed) cell in its own subdirectory; writes
/// sweep.csv with one row per cell and combined.csv with the mAP of the
/// concatenated features of all seeds of each (L, H).
void cmd_sweep(const SweepOptions& options, std::ostream& out);

}  // namespace densemble
