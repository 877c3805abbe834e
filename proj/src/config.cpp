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

#include "densemble/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "densemble/errors.hpp"

namespace densemble {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string qualified(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got \"" + v + "\"");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected an unsigned integer, got \"" + v + "\"");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got \"" + v + "\"");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got \"" + v + "\"");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// Keys shared by the experiment config and checkpoint headers.
bool set_model_key(EnsembleConfig& m, const std::string& section, const std::string& key, const std::string& v) {
  const std::string q = qualified(section, key);
  DenseNetConfig& b = m.backbone;
  if (section == "backbone") {
    if (key == "growth_rate") return b.growth_rate = to_size(q, v), true;
    if (key == "block_sizes") {
      const auto sizes = parse_size_list(v);
      if (sizes.size() != 4) throw ConfigError(q + ": expected 4 block sizes, got \"" + v + "\"");
      std::copy(sizes.begin(), sizes.end(), b.block_sizes.begin());
      return true;
    }
    if (key == "stem_channels") return b.stem_channels = to_size(q, v), true;
    if (key == "compression") return b.compression = to_double(q, v), true;
    if (key == "bottleneck_factor") return b.bottleneck_factor = to_size(q, v), true;
    if (key == "input_channels") return b.input_channels = to_size(q, v), true;
    if (key == "input_height") return b.input_height = to_size(q, v), true;
    if (key == "input_width") return b.input_width = to_size(q, v), true;
    return false;
  }
  if (section == "ensemble") {
    if (key == "heads_per_family") return m.heads_per_family = to_size(q, v), true;
    if (key == "embedding_dim") return m.embedding_dim = to_size(q, v), true;
    if (key == "num_classes") return m.num_classes = to_size(q, v), true;
    if (key == "block4_attach") return m.block4_attach = parse_size_list(v), true;
    if (key == "block3_tap") return m.block3_tap = parse_block3_tap(v), true;
    if (key == "block4_tap") return m.block4_tap = parse_block4_tap(v), true;
    if (key == "head_init_std") return m.head_init_std = to_double(q, v), true;
    return false;
  }
  return false;
}

void write_model_sections(std::ostream& out, const EnsembleConfig& m) {
  const DenseNetConfig& b = m.backbone;
  out << "[backbone]\n"
      << "growth_rate = " << b.growth_rate << '\n'
      << "block_sizes = " << join({b.block_sizes.begin(), b.block_sizes.end()}) << '\n'
      << "stem_channels = " << b.stem_channels << '\n'
      << "compression = " << fmt(b.compression) << '\n'
      << "bottleneck_factor = " << b.bottleneck_factor << '\n'
      << "input_channels = " << b.input_channels << '\n'
      << "input_height = " << b.input_height << '\n'
      << "input_width = " << b.input_width << "\n\n"
      << "[ensemble]\n"
      << "heads_per_family = " << m.heads_per_family << '\n'
      << "embedding_dim = " << m.embedding_dim << '\n'
      << "num_classes = " << m.num_classes << '\n'
      << "block4_attach = " << join(m.block4_attach) << '\n'
      << "block3_tap = " << to_string(m.block3_tap) << '\n'
      << "block4_tap = " << to_string(m.block4_tap) << '\n'
      << "head_init_std = " << fmt(m.head_init_std) << '\n';
}

}  // namespace

std::vector<IniEntry> parse_ini(const std::string& text, const std::string& origin) {
  std::vector<IniEntry> entries;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto comment = raw.find_first_of("#;");
    const std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    IniEntry e{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError(where + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      if (trim(text).empty()) break;
      throw ConfigError("empty element in list \"" + text + "\"");
    }
    out.push_back(to_size("list element", item));
  }
  return out;
}

std::vector<std::size_t> parse_head_list(const std::string& text, std::size_t num_heads) {
  const std::string t = trim(text);
  std::set<std::size_t> heads;
  if (t == "all") {
    for (std::size_t h = 0; h < num_heads; ++h) heads.insert(h);
  } else {
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      const auto dash = item.find('-');
      std::size_t lo, hi;
      if (dash == std::string::npos) {
        lo = hi = to_size("heads", item);
      } else {
        lo = to_size("heads", trim(item.substr(0, dash)));
        hi = to_size("heads", trim(item.substr(dash + 1)));
        if (hi < lo) throw ConfigError("heads: empty range \"" + item + "\"");
      }
      if (hi >= num_heads)
        throw ConfigError("heads: index " + std::to_string(hi) + " outside [0," + std::to_string(num_heads) + ")");
      for (std::size_t h = lo; h <= hi; ++h) heads.insert(h);
    }
  }
  if (heads.empty()) throw ConfigError("heads: empty head subset");
  return {heads.begin(), heads.end()};
}

ExperimentConfig ExperimentConfig::profile(const std::string& name) {
  ExperimentConfig c;
  if (name == "mini") {
    c.model.num_classes = 0;
    return c;
  }
  if (name == "paper" || name == "densenet121-full") {
    c.profile_name = name;
    c.model = EnsembleConfig::paper();
    c.train = TrainConfig::paper();
    c.data.synthetic.height = 384;
    c.data.synthetic.width = 128;
    return c;
  }
  throw ConfigError("unknown profile \"" + name + "\" (expected mini, paper or densenet121-full)");
}

void ExperimentConfig::set(const std::string& section, const std::string& key, const std::string& v) {
  const std::string q = qualified(section, key);
  if (set_model_key(model, section, key, v)) return;
  if (section == "train") {
    TrainConfig& t = train;
    RandomErasingParams& re = t.augment.erasing;
    if (key == "batch_size") return void(t.batch_size = to_size(q, v));
    if (key == "lr") return void(t.lr0 = to_double(q, v));
    if (key == "epochs") return void(t.epochs = to_size(q, v));
    if (key == "decay_epoch") return void(t.decay_epoch = to_size(q, v));
    if (key == "decay_factor") return void(t.decay_factor = to_double(q, v));
    if (key == "momentum") return void(t.momentum = to_double(q, v));
    if (key == "weight_decay") return void(t.weight_decay = to_double(q, v));
    if (key == "seed") return void(t.seed = to_u64(q, v));
    if (key == "flip") return void(t.augment.flip = to_bool(q, v));
    if (key == "crop") return void(t.augment.crop = to_bool(q, v));
    if (key == "crop_pad") return void(t.augment.crop_pad = to_size(q, v));
    if (key == "random_erasing") return void(t.augment.random_erasing = to_bool(q, v));
    if (key == "re_probability") return void(re.probability = to_double(q, v));
    if (key == "re_area_lo") return void(re.area_lo = to_double(q, v));
    if (key == "re_area_hi") return void(re.area_hi = to_double(q, v));
    if (key == "re_aspect_lo") return void(re.aspect_lo = to_double(q, v));
    if (key == "re_aspect_hi") return void(re.aspect_hi = to_double(q, v));
    if (key == "checkpoint_every") return void(t.checkpoint_every = to_size(q, v));
    if (key == "threads") return void(threads = to_size(q, v));
  } else if (section == "data") {
    SyntheticSpec& s = data.synthetic;
    if (key == "root") return void(data.root = v);
    if (key == "n_train_ids") return void(s.n_train_ids = to_size(q, v));
    if (key == "n_test_ids") return void(s.n_test_ids = to_size(q, v));
    if (key == "views_per_id") return void(s.views_per_id = to_size(q, v));
    if (key == "n_cams") return void(s.n_cams = to_size(q, v));
    if (key == "height") return void(s.height = to_size(q, v));
    if (key == "width") return void(s.width = to_size(q, v));
    if (key == "seed") return void(s.seed = to_u64(q, v));
  } else if (section == "eval") {
    if (key == "metric") return void(eval.metric = parse_metric(v));
    if (key == "heads") return void(eval.heads = v);
    if (key == "max_rank") return void(eval.max_rank = to_size(q, v));
  } else if (section == "output") {
    if (key == "dir") return void(output_dir = v);
  } else if (section.empty() && key == "profile") {
    throw ConfigError("profile must be the first entry of the config");
  }
  throw ConfigError("unknown config key \"" + q + "\"");
}

void ExperimentConfig::apply(const std::vector<IniEntry>& entries) {
  for (const IniEntry& e : entries) {
    try {
      set(e.section, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
}

void ExperimentConfig::validate() const {
  EnsembleConfig m = model;
  if (m.num_classes == 0) m.num_classes = 2;  // filled in from the data later
  m.validate();
  train.validate();
  if (eval.max_rank < 1) throw ConfigError("eval.max_rank must be >= 1");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  const TrainConfig& t = train;
  const RandomErasingParams& re = t.augment.erasing;
  const SyntheticSpec& s = data.synthetic;
  out << "profile = " << profile_name << "\n\n";
  write_model_sections(out, model);
  out << "\n[train]\n"
      << "batch_size = " << t.batch_size << '\n'
      << "lr = " << fmt(t.lr0) << '\n'
      << "epochs = " << t.epochs << '\n'
      << "decay_epoch = " << t.decay_epoch << '\n'
      << "decay_factor = " << fmt(t.decay_factor) << '\n'
      << "momentum = " << fmt(t.momentum) << '\n'
      << "weight_decay = " << fmt(t.weight_decay) << '\n'
      << "seed = " << t.seed << '\n'
      << "flip = " << fmt(t.augment.flip) << '\n'
      << "crop = " << fmt(t.augment.crop) << '\n'
      << "crop_pad = " << t.augment.crop_pad << '\n'
      << "random_erasing = " << fmt(t.augment.random_erasing) << '\n'
      << "re_probability = " << fmt(re.probability) << '\n'
      << "re_area_lo = " << fmt(re.area_lo) << '\n'
      << "re_area_hi = " << fmt(re.area_hi) << '\n'
      << "re_aspect_lo = " << fmt(re.aspect_lo) << '\n'
      << "re_aspect_hi = " << fmt(re.aspect_hi) << '\n'
      << "checkpoint_every = " << t.checkpoint_every << '\n'
      << "threads = " << threads << "\n\n"
      << "[data]\n"
      << "root = " << data.root << '\n'
      << "n_train_ids = " << s.n_train_ids << '\n'
      << "n_test_ids = " << s.n_test_ids << '\n'
      << "views_per_id = " << s.views_per_id << '\n'
      << "n_cams = " << s.n_cams << '\n'
      << "height = " << s.height << '\n'
      << "width = " << s.width << '\n'
      << "seed = " << s.seed << "\n\n"
      << "[eval]\n"
      << "metric = " << to_string(eval.metric) << '\n'
      << "heads = " << eval.heads << '\n'
      << "max_rank = " << eval.max_rank << "\n\n"
      << "[output]\n"
      << "dir = " << output_dir << '\n';
  return out.str();
}

ExperimentConfig experiment_config_from_text(const std::string& text, const std::string& origin) {
  auto entries = parse_ini(text, origin);
  std::string profile = "mini";
  if (!entries.empty() && entries.front().section.empty() && entries.front().key == "profile") {
    profile = entries.front().value;
    entries.erase(entries.begin());
  }
  ExperimentConfig config = ExperimentConfig::profile(profile);
  try {
    config.apply(entries);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return experiment_config_from_text(buf.str(), path);
}

std::string model_config_text(const EnsembleConfig& config) {
  std::ostringstream out;
  write_model_sections(out, config);
  return out.str();
}

EnsembleConfig parse_model_config_text(const std::string& text) {
  EnsembleConfig config;
  for (const IniEntry& e : parse_ini(text, "checkpoint header"))
    if (!set_model_key(config, e.section, e.key, e.value))
      throw DataError("checkpoint header has unknown key \"" + qualified(e.section, e.key) + "\"");
  return config;
}

}  // namespace densemble
