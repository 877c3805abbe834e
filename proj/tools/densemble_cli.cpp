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

// densemble command-line tool. Exit codes: 0 success, 1 usage or
// configuration error, 2 data error, 3 a check reported failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "densemble/commands.hpp"
#include "densemble/errors.hpp"

namespace {

using namespace densemble;

struct CommonOptions {
  std::string config_path;
  std::string profile = "mini";
  std::vector<std::string> overrides;  // section.key=value
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Experiment config file");
  cmd->add_option("--profile", o.profile, "Named profile when no config file is given (mini, paper)");
  cmd->add_option("--set", o.overrides, "Override one key, e.g. --set train.lr=0.02")->take_all();
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg =
      o.config_path.empty() ? ExperimentConfig::profile(o.profile) : load_experiment_config(o.config_path);
  for (const std::string& item : o.overrides) {
    const auto eq = item.find('=');
    const auto dot = item.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("--set expects section.key=value, got \"" + item + "\"");
    cfg.set(item.substr(0, dot), item.substr(dot + 1, eq - dot - 1), item.substr(eq + 1));
  }
  return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (std::size_t v : parse_size_list(text)) out.push_back(v);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"densemble: shared-backbone ensemble embeddings for re-identification"};
  app.set_version_flag("--version", "densemble " + tool_version());
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)");

  CommonOptions common;

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset to disk");
  add_common(gen, common);
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "Dataset root")->required();
  gen->add_option("--seed", gen_seed, "Dataset seed (data.seed)");

  auto* tr = app.add_subcommand("train", "Train an ensemble and write its log and checkpoint");
  add_common(tr, common);
  std::optional<std::uint64_t> train_seed;
  std::string train_out, train_data;
  tr->add_option("--seed", train_seed, "Training seed (train.seed)");
  tr->add_option("--out", train_out, "Output directory (output.dir)");
  tr->add_option("--data", train_data, "Dataset root; omitted: synthetic data in memory");

  auto* ex = app.add_subcommand("extract", "Extract query and gallery features");
  add_common(ex, common);
  ExtractOptions extract;
  std::string extract_data;
  ex->add_option("--model", extract.models, "Checkpoint (repeat with --combine)")->required();
  ex->add_flag("--combine", extract.combine, "Concatenate the features of several checkpoints");
  ex->add_option("--heads", extract.heads, "\"all\" or a list such as 0,2-4");
  ex->add_flag("--binary", extract.binary, "Also write quantized codes");
  ex->add_option("--out", extract.out_dir, "Output directory");
  ex->add_option("--data", extract_data, "Dataset root; omitted: synthetic data from the config");

  auto* ev = app.add_subcommand("eval", "Rank gallery features and report CMC / mAP");
  EvalOptions eval;
  std::string metric = "euclidean";
  ev->add_option("--query", eval.query, "Query feature file")->required();
  ev->add_option("--gallery", eval.gallery, "Gallery feature file")->required();
  ev->add_option("--metric", metric, "euclidean or hamming");
  ev->add_option("--heads", eval.heads, "\"all\" or a list such as 0,2-4");
  ev->add_option("--head-dim", eval.head_dim, "Per-head width (default: from features.ini)");
  ev->add_option("--max-rank", eval.max_rank, "Longest CMC rank reported");
  ev->add_option("--out", eval.out_dir, "Output directory");

  auto* fl = app.add_subcommand("flops", "Static multiply-accumulate count");
  FlopsOptions flops;
  fl->add_option("--profile", flops.profile, "mini, paper or densenet121-full");
  fl->add_option("--heads", flops.heads, "\"all\" or a list such as 0,2-4");
  fl->add_flag("--baseline", flops.baseline, "Single global-average-pooled head instead of the ensemble");
  fl->add_flag("--csv", flops.csv, "Machine-readable rows");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every gradient");
  GradCheckCommand grad;
  gc->add_option("--seeds", grad.seeds, "Random shapes per primitive");
  gc->add_option("--model-seeds", grad.model_seeds, "Full-model checks");
  gc->add_option("--model-coords", grad.model_coords, "Sampled coordinates per model tensor");
  gc->add_option("--model-batch", grad.model_batch, "Images per full-model check");

  auto* sw = app.add_subcommand("sweep", "Train over a grid of seeds, L and H");
  add_common(sw, common);
  std::string sweep_seeds = "1", sweep_l, sweep_h, sweep_out = "sweep";
  sw->add_option("--seeds", sweep_seeds, "Comma list of seeds");
  sw->add_option("--L", sweep_l, "Comma list of heads per family");
  sw->add_option("--H", sweep_h, "Comma list of embedding widths");
  sw->add_option("--out", sweep_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(static_cast<int>(threads));
#endif
    if (*gen) {
      ExperimentConfig cfg = resolve(common);
      if (gen_seed) cfg.data.synthetic.seed = *gen_seed;
      cmd_gen_data(cfg, gen_out, std::cout);
    } else if (*tr) {
      ExperimentConfig cfg = resolve(common);
      if (train_seed) cfg.train.seed = *train_seed;
      if (!train_out.empty()) cfg.output_dir = train_out;
      if (!train_data.empty()) cfg.data.root = train_data;
      cmd_train(cfg, std::cout);
    } else if (*ex) {
      ExperimentConfig cfg = resolve(common);
      if (!extract_data.empty()) cfg.data.root = extract_data;
      extract.data = cfg.data;
      cmd_extract(extract, std::cout);
    } else if (*ev) {
      eval.metric = parse_metric(metric);
      cmd_eval(eval, std::cout);
    } else if (*fl) {
      cmd_flops(flops, std::cout);
    } else if (*gc) {
      if (!cmd_grad_check(grad, std::cout)) return 3;
    } else if (*sw) {
      SweepOptions sweep;
      sweep.base = resolve(common);
      sweep.seeds = parse_seeds(sweep_seeds);
      sweep.heads_per_family = parse_size_list(sweep_l);
      sweep.embedding_dims = parse_size_list(sweep_h);
      sweep.out_dir = sweep_out;
      cmd_sweep(sweep, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
