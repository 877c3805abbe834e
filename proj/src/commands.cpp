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

#include "densemble/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "densemble/errors.hpp"
#include "densemble/experiment.hpp"
#include "densemble/grad_check.hpp"

namespace densemble {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double rank_or_last(const CmcCurve& c, std::size_t r) {
  return c.match_rate.empty() ? 0.0 : c.rank(std::min(r, c.match_rate.size()));
}

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + std::to_string(v[i]);
  return s;
}

void print_score_header(std::ostream& out) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8s\n", "heads", "rank1", "rank5", "rank10", "mAP");
  out << buf;
}

void print_score(std::ostream& out, const std::string& label, const CmcCurve& c) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-14s %8.4f %8.4f %8.4f %8.4f\n", label.c_str(), rank_or_last(c, 1),
                rank_or_last(c, 5), rank_or_last(c, 10), c.mean_ap);
  out << buf;
}

std::string score_row(const std::string& kind, const std::string& heads, const CmcCurve& c) {
  return kind + "," + heads + "," + fmt("%.10g", rank_or_last(c, 1)) + "," + fmt("%.10g", rank_or_last(c, 5)) + "," +
         fmt("%.10g", rank_or_last(c, 10)) + "," + fmt("%.10g", c.mean_ap) + "\n";
}

// Settings a feature directory was produced with; read back by eval.
struct FeatureInfo {
  std::size_t head_dim = 0;
  std::string heads;
};

FeatureInfo read_feature_info(const fs::path& path) {
  FeatureInfo info;
  std::ifstream f(path);
  if (!f) return info;
  std::stringstream ss;
  ss << f.rdbuf();
  for (const IniEntry& e : parse_ini(ss.str(), path.string())) {
    if (e.key == "head_dim") {
      info.head_dim = parse_size_list(e.value).at(0);
    } else if (e.key == "heads") {
      info.heads = e.value;
    }
  }
  return info;
}

}  // namespace

std::string tool_version() { return DENSEMBLE_VERSION; }

void write_run_files(const std::string& dir, const std::string& command, const std::string& config_text,
                     std::uint64_t seed) {
  fs::create_directories(dir);
  write_text(fs::path(dir) / "config.ini", config_text);
  write_text(fs::path(dir) / "run.txt", "tool = densemble " + tool_version() + "\ncommand = " + command +
                                            "\nseed = " + std::to_string(seed) + "\n");
}

void cmd_gen_data(const ExperimentConfig& config, const std::string& root, std::ostream& out) {
  config.validate();
  const ReidDataset ds = generate_synthetic(config.data.synthetic);
  ds.validate();
  save_dataset(ds, root);
  write_run_files(root, "gen-data", config.to_text(), config.data.synthetic.seed);
  out << "wrote " << ds.train.size() << " train, " << ds.query.size() << " query, " << ds.gallery.size()
      << " gallery images to " << root << "\n";
}

void cmd_train(const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  const ReidDataset ds = prepare_dataset(config.data);
  ExperimentConfig resolved = config;
  resolved.model = resolve_model(config.model, ds);
  const fs::path dir = config.output_dir;
  write_run_files(dir.string(), "train", resolved.to_text(), config.train.seed);

  const DenseNetConfig& bb = resolved.model.backbone;
  const TrainingSet set = make_training_set(ds.train, bb.input_height, bb.input_width);
  EnsembleModel model(resolved.model, config.train.seed);
  const std::size_t every = config.train.checkpoint_every;
  const TrainLog log = train(model, set, config.train, [&](const EpochRecord& r, EnsembleModel& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %3zu  lr %.4g  loss %.6f\n", r.epoch + 1, r.lr, r.total_loss);
    out << buf << std::flush;
    if (every && (r.epoch + 1) % every == 0 && r.epoch + 1 < config.train.epochs)
      m.save((dir / ("model_epoch" + std::to_string(r.epoch + 1) + ".bin")).string());
  });
  std::ostringstream csv;
  log.write_csv(csv);
  write_text(dir / "train_log.csv", csv.str());
  model.save((dir / "model.bin").string());
  out << "wrote " << (dir / "train_log.csv").string() << " and " << (dir / "model.bin").string() << "\n";
}

void cmd_extract(const ExtractOptions& options, std::ostream& out) {
  if (options.models.empty()) throw ConfigError("extract needs at least one --model");
  if (options.models.size() > 1 && !options.combine)
    throw ConfigError("several --model checkpoints given; pass --combine to concatenate them");
  const ReidDataset ds = prepare_dataset(options.data);
  std::vector<FeatureMatrix> query_parts, gallery_parts;
  std::size_t head_dim = 0;
  bool uniform_dim = true;
  std::string used_heads;
  for (const std::string& path : options.models) {
    EnsembleModel model = EnsembleModel::load(path);
    const auto heads = parse_head_list(options.heads, model.config().num_heads());
    query_parts.push_back(extract_features(model, ds.query, heads));
    gallery_parts.push_back(extract_features(model, ds.gallery, heads));
    const std::size_t d = model.config().embedding_dim;
    if (head_dim && head_dim != d) uniform_dim = false;
    head_dim = d;
    used_heads += (used_heads.empty() ? "" : " | ") + join(heads, ',');
  }
  const FeatureMatrix q = combine_features(query_parts);
  const FeatureMatrix g = combine_features(gallery_parts);
  const fs::path dir = options.out_dir;
  fs::create_directories(dir);
  write_feature_file((dir / "query.feat").string(), q);
  write_feature_file((dir / "gallery.feat").string(), g);
  if (options.binary) {
    write_feature_file((dir / "query.bits.feat").string(), quantize(q));
    write_feature_file((dir / "gallery.bits.feat").string(), quantize(g));
  }
  std::string info = "[features]\nhead_dim = " + std::to_string(uniform_dim ? head_dim : 0) + "\n";
  info += "heads = " + used_heads + "\n";
  for (std::size_t i = 0; i < options.models.size(); ++i) info += "model" + std::to_string(i) + " = " + options.models[i] + "\n";
  write_text(dir / "features.ini", info);
  std::string cfg = "[extract]\nheads = " + options.heads + "\ncombine = " + (options.combine ? "true" : "false") +
                    "\nbinary = " + (options.binary ? "true" : "false") + "\n";
  ExperimentConfig data_cfg;
  data_cfg.data = options.data;
  cfg += "\n" + data_cfg.to_text();
  write_run_files(dir.string(), "extract", cfg, options.data.synthetic.seed);
  out << "wrote " << q.rows << " query and " << g.rows << " gallery features of width " << q.dim << " to "
      << dir.string() << "\n";
}

void cmd_eval(const EvalOptions& options, std::ostream& out) {
  const FeatureFile qf = read_feature_file(options.query);
  const FeatureFile gf = read_feature_file(options.gallery);
  if (qf.binary != gf.binary) throw DataError("query and gallery features must both be real-valued or both binary");
  std::size_t head_dim = options.head_dim;
  if (head_dim == 0) head_dim = read_feature_info(fs::path(options.query).parent_path() / "features.ini").head_dim;

  // Work on real matrices; binary inputs become {0,1} columns so head
  // selection applies uniformly, and are re-packed for Hamming ranking.
  FeatureMatrix q = qf.binary ? unpack_codes(qf.codes) : qf.real;
  FeatureMatrix g = gf.binary ? unpack_codes(gf.codes) : gf.real;
  if (q.dim != g.dim) throw DataError("query and gallery feature widths differ");
  std::vector<std::size_t> heads;
  if (head_dim) {
    if (q.dim % head_dim) throw DataError("feature width is not a multiple of head_dim " + std::to_string(head_dim));
    heads = parse_head_list(options.heads, q.dim / head_dim);
    q = select_heads(q, head_dim, heads);
    g = select_heads(g, head_dim, heads);
  } else if (options.heads != "all") {
    throw ConfigError("--heads needs the per-head width (--head-dim or features.ini)");
  }

  auto rank = [&](const FeatureMatrix& a, const FeatureMatrix& b) {
    return options.metric == Metric::Hamming ? rank_gallery(quantize(a), quantize(b))
                                             : rank_gallery(a, b, Metric::Euclidean);
  };
  const RankingResult ranking = rank(q, g);
  const CmcCurve full = evaluate(ranking, options.max_rank);

  const fs::path dir = options.out_dir;
  std::string cfg = "[eval]\nquery = " + options.query + "\ngallery = " + options.gallery +
                    "\nmetric = " + to_string(options.metric) + "\nheads = " + options.heads +
                    "\nhead_dim = " + std::to_string(head_dim) + "\nmax_rank = " + std::to_string(options.max_rank) +
                    "\n";
  write_run_files(dir.string(), "eval", cfg, 0);
  std::ostringstream cmc, rk;
  write_cmc_csv(cmc, full);
  write_ranking_csv(rk, ranking);
  write_text(dir / "cmc.csv", cmc.str());
  write_text(dir / "ranking.csv", rk.str());

  out << "metric " << to_string(options.metric) << ", " << full.scored << " queries scored";
  if (full.skipped) out << ", " << full.skipped << " without a cross-camera match";
  out << "\n";
  print_score_header(out);
  const std::string label = heads.empty() ? "all" : (options.heads == "all" ? "all" : join(heads, ','));
  print_score(out, label, full);
  std::string rows = "kind,heads,rank1,rank5,rank10,mAP\n" + score_row("selected", join(heads, ' '), full);

  if (heads.size() > 1) {
    const std::vector<std::size_t> local = [&] {
      std::vector<std::size_t> v(heads.size());
      std::iota(v.begin(), v.end(), std::size_t{0});
      return v;
    }();
    out << "individual\n";
    std::vector<CmcCurve> singles;
    for (std::size_t i = 0; i < heads.size(); ++i) {
      const std::size_t one[] = {local[i]};
      singles.push_back(evaluate(rank(select_heads(q, head_dim, one), select_heads(g, head_dim, one)), options.max_rank));
      print_score(out, "head " + std::to_string(heads[i]), singles.back());
      rows += score_row("single", std::to_string(heads[i]), singles.back());
    }
    out << "cumulative\n";
    for (std::size_t i = 0; i < heads.size(); ++i) {
      const std::vector<std::size_t> prefix(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      const CmcCurve c =
          i + 1 == heads.size() ? full
                                : evaluate(rank(select_heads(q, head_dim, prefix), select_heads(g, head_dim, prefix)),
                                           options.max_rank);
      const std::vector<std::size_t> named(heads.begin(), heads.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      print_score(out, "1.." + std::to_string(i + 1), c);
      rows += score_row("cumulative", join(named, ' '), c);
    }
  }
  write_text(dir / "heads.csv", rows);
}

FlopReport cmd_flops(const FlopsOptions& options, std::ostream& out) {
  const ExperimentConfig cfg = ExperimentConfig::profile(options.profile);
  EnsembleConfig model = cfg.model;
  if (model.num_classes == 0) model.num_classes = cfg.data.synthetic.n_train_ids;
  FlopReport report;
  if (options.baseline) {
    report = count_baseline(model.backbone);
  } else {
    report = count_model(model, parse_head_list(options.heads, model.num_heads()));
  }
  if (options.csv) {
    report.write_csv(out);
  } else {
    out << "profile " << options.profile << (options.baseline ? " (single-head baseline)" : "") << "\n";
    report.write_table(out);
  }
  return report;
}

bool cmd_grad_check(const GradCheckCommand& options, std::ostream& out) {
  bool ok = true;
  char buf[192];
  const auto t0 = std::chrono::steady_clock::now();
  for (const std::string& kind : primitive_kinds()) {
    double worst = 0.0;
    std::size_t coords = 0, skipped = 0;
    for (std::uint64_t seed = 0; seed < options.seeds; ++seed) {
      const GradCheckReport r = check_primitive(kind, seed);
      worst = std::max(worst, r.max_rel_error);
      coords += r.coords;
      skipped += r.kink_skipped;
    }
    const bool pass = worst <= options.primitive_tol;
    ok = ok && pass;
    std::snprintf(buf, sizeof buf, "%-16s seeds %3zu  coords %7zu  kink-skipped %4zu  max rel err %.3e  %s\n",
                  kind.c_str(), options.seeds, coords, skipped, worst, pass ? "ok" : "FAIL");
    out << buf << std::flush;
  }
  EnsembleConfig model = EnsembleConfig::mini();
  // At the default head init the backbone gradients are too small for
  // central differences to resolve. Batchnorm with a batch of 2 leaves 4
  // samples per channel in block 4, and the near-zero variances it then
  // divides by amplify rounding noise; a batch of 4 avoids that.
  model.head_init_std = 0.1;
  GradCheckOptions go;
  go.max_coords = options.model_coords;
  for (std::uint64_t seed = 0; seed < options.model_seeds; ++seed) {
    go.seed = seed;
    const GradCheckReport r = check_model(model, seed, options.model_batch, go);
    const bool pass = r.max_rel_error <= options.model_tol;
    ok = ok && pass;
    std::snprintf(buf, sizeof buf, "%-16s seed  %3llu  coords %7zu  kink-skipped %4zu  max rel err %.3e  %s\n",
                  "model(mini)", static_cast<unsigned long long>(seed), r.coords, r.kink_skipped, r.max_rel_error,
                  pass ? "ok" : "FAIL");
    out << buf << std::flush;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::snprintf(buf, sizeof buf, "%s in %.1f s\n", ok ? "all checks within tolerance" : "gradient check FAILED", secs);
  out << buf;
  return ok;
}

void cmd_sweep(const SweepOptions& options, std::ostream& out) {
  if (options.seeds.empty()) throw ConfigError("sweep needs at least one seed");
  options.base.validate();
  const ReidDataset ds = prepare_dataset(options.base.data);
  const std::vector<std::size_t> ls =
      options.heads_per_family.empty() ? std::vector<std::size_t>{options.base.model.heads_per_family}
                                       : options.heads_per_family;
  const std::vector<std::size_t> hs =
      options.embedding_dims.empty() ? std::vector<std::size_t>{options.base.model.embedding_dim}
                                     : options.embedding_dims;
  const fs::path dir = options.out_dir;
  write_run_files(dir.string(), "sweep", options.base.to_text(), options.seeds.front());

  std::string rows =
      "L,H,seed,first_loss,final_loss,rank1,mAP,mean_single_mAP,best_single_mAP,cumulative_nondecreasing,"
      "cumulative_steps,hamming_mAP\n";
  std::string combined = "L,H,seeds,rank1,mAP\n";
  for (std::size_t L : ls)
    for (std::size_t H : hs) {
      std::vector<FeatureMatrix> qs, gs;
      for (std::uint64_t seed : options.seeds) {
        ExperimentConfig cfg = options.base;
        cfg.model.heads_per_family = L;
        cfg.model.embedding_dim = H;
        cfg.model.block4_attach.clear();
        cfg.train.seed = seed;
        const std::string name = "L" + std::to_string(L) + "_H" + std::to_string(H) + "_seed" + std::to_string(seed);
        cfg.output_dir = (dir / name).string();
        const RunOutcome run = run_experiment(cfg, ds);
        ExperimentConfig resolved = cfg;
        resolved.model = resolve_model(cfg.model, ds);
        write_run_files(cfg.output_dir, "sweep", resolved.to_text(), seed);
        std::ostringstream csv;
        run.log.write_csv(csv);
        write_text(fs::path(cfg.output_dir) / "train_log.csv", csv.str());
        std::string head_rows = "kind,heads,rank1,rank5,rank10,mAP\n";
        for (std::size_t h = 0; h < run.euclidean.single.size(); ++h)
          head_rows += score_row("single", std::to_string(h), run.euclidean.single[h]);
        for (std::size_t h = 0; h < run.euclidean.cumulative.size(); ++h)
          head_rows += score_row("cumulative", "0-" + std::to_string(h), run.euclidean.cumulative[h]);
        write_text(fs::path(cfg.output_dir) / "heads.csv", head_rows);

        const CumulativeTrend trend = cumulative_trend(run.euclidean);
        const double first = run.log.epochs.front().total_loss, last = run.log.epochs.back().total_loss;
        rows += std::to_string(L) + "," + std::to_string(H) + "," + std::to_string(seed) + "," + fmt("%.10g", first) +
                "," + fmt("%.10g", last) + "," + fmt("%.10g", rank_or_last(run.euclidean.full, 1)) + "," +
                fmt("%.10g", run.euclidean.full.mean_ap) + "," + fmt("%.10g", run.euclidean.mean_single_map) + "," +
                fmt("%.10g", run.euclidean.best_single_map) + "," + std::to_string(trend.nondecreasing) + "," +
                std::to_string(trend.steps) + "," + fmt("%.10g", run.hamming.mean_ap) + "\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "L %zu  H %zu  seed %llu  loss %.4f -> %.4f  mAP %.4f  hamming %.4f\n", L, H,
                      static_cast<unsigned long long>(seed), first, last, run.euclidean.full.mean_ap,
                      run.hamming.mean_ap);
        out << buf << std::flush;
        qs.push_back(run.query);
        gs.push_back(run.gallery);
      }
      if (options.seeds.size() > 1) {
        const CmcCurve c =
            evaluate(rank_gallery(combine_features(qs), combine_features(gs), Metric::Euclidean), options.base.eval.max_rank);
        combined += std::to_string(L) + "," + std::to_string(H) + "," + std::to_string(options.seeds.size()) + "," +
                    fmt("%.10g", rank_or_last(c, 1)) + "," + fmt("%.10g", c.mean_ap) + "\n";
      }
    }
  write_text(dir / "sweep.csv", rows);
  if (options.seeds.size() > 1) write_text(dir / "combined.csv", combined);
}

}  // namespace densemble
