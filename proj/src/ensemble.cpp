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

#include "densemble/ensemble.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "densemble/binary_io.hpp"
#include "densemble/config.hpp"
#include "densemble/errors.hpp"

namespace densemble {

std::string to_string(Block3Tap tap) { return tap == Block3Tap::PreTransition ? "pre_transition" : "post_transition"; }
std::string to_string(Block4Tap tap) { return tap == Block4Tap::State ? "state" : "layer_output"; }

Block3Tap parse_block3_tap(const std::string& text) {
  if (text == "pre_transition") return Block3Tap::PreTransition;
  if (text == "post_transition") return Block3Tap::PostTransition;
  throw ConfigError("block3_tap must be pre_transition or post_transition, got \"" + text + "\"");
}

Block4Tap parse_block4_tap(const std::string& text) {
  if (text == "state") return Block4Tap::State;
  if (text == "layer_output") return Block4Tap::LayerOutput;
  throw ConfigError("block4_tap must be state or layer_output, got \"" + text + "\"");
}

EnsembleConfig EnsembleConfig::mini() { return EnsembleConfig{}; }

EnsembleConfig EnsembleConfig::paper(std::size_t heads_per_family, std::size_t embedding_dim,
                                     std::size_t num_classes) {
  EnsembleConfig c;
  c.backbone = DenseNetConfig::densenet121();
  c.heads_per_family = heads_per_family;
  c.embedding_dim = embedding_dim;
  c.num_classes = num_classes;
  c.block3_tap = Block3Tap::PostTransition;
  c.block4_tap = Block4Tap::LayerOutput;
  return c;
}

std::vector<std::size_t> EnsembleConfig::resolved_attach() const {
  if (!block4_attach.empty()) return block4_attach;
  const std::size_t n4 = backbone.block_sizes[3];
  std::vector<std::size_t> attach;
  for (std::size_t i = 1; i <= heads_per_family; ++i)
    attach.push_back((i * n4 + heads_per_family - 1) / heads_per_family);
  return attach;
}

void EnsembleConfig::validate() const {
  backbone.validate();
  if (heads_per_family < 1) throw ConfigError("ensemble.heads_per_family must be >= 1");
  if (embedding_dim < 1) throw ConfigError("ensemble.embedding_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("ensemble.num_classes must be >= 2, got " + std::to_string(num_classes));
  if (!(head_init_std > 0.0)) throw ConfigError("ensemble.head_init_std must be positive");
  const auto attach = resolved_attach();
  const std::size_t n4 = backbone.block_sizes[3];
  if (attach.size() != heads_per_family)
    throw ConfigError("ensemble.block4_attach has " + std::to_string(attach.size()) + " entries, need " +
                      std::to_string(heads_per_family));
  for (std::size_t i = 0; i < attach.size(); ++i) {
    if (attach[i] < 1 || attach[i] > n4)
      throw ConfigError("ensemble.block4_attach entry " + std::to_string(attach[i]) + " outside [1," +
                        std::to_string(n4) + "]");
    if (i > 0 && attach[i] <= attach[i - 1])
      throw ConfigError("ensemble.block4_attach must be strictly increasing (L=" + std::to_string(heads_per_family) +
                        ", n4=" + std::to_string(n4) + ")");
  }
  if (attach.back() != n4) throw ConfigError("ensemble.block4_attach must end at the final block-4 layer");
  head_taps(*this);
}

std::vector<std::size_t> split_widths(std::size_t channels, std::size_t groups) {
  if (groups == 0 || groups > channels)
    throw ConfigError("cannot split " + std::to_string(channels) + " channels into " + std::to_string(groups) +
                      " groups");
  std::vector<std::size_t> widths(groups, channels / groups);
  widths.back() += channels % groups;
  return widths;
}

std::vector<Tensor> split_channel_groups(const Tensor& feature_map, std::size_t groups) {
  if (feature_map.rank() != 4) throw ConfigError("split_channel_groups expects an NCHW tensor");
  const auto widths = split_widths(feature_map.dim(1), groups);
  return split_channels(feature_map, widths);
}

std::vector<TapSpec> head_taps(const EnsembleConfig& config) {
  const BackboneGeometry geo = describe_backbone(config.backbone);
  const std::size_t L = config.heads_per_family;
  const std::size_t k = config.backbone.growth_rate;
  std::vector<TapSpec> taps;

  TapSpec base;
  std::size_t channels = 0;
  if (config.block3_tap == Block3Tap::PreTransition) {
    base.source = TapSpec::Source::Block3Out;
    channels = geo.blocks[2].out_channels;
    base.height = geo.blocks[2].height;
    base.width = geo.blocks[2].width;
  } else {
    base.source = TapSpec::Source::Block4State;
    base.state_index = 0;
    channels = geo.blocks[3].in_channels;
    base.height = geo.blocks[3].height;
    base.width = geo.blocks[3].width;
  }
  std::size_t begin = 0;
  for (std::size_t w : split_widths(channels, L)) {
    TapSpec t = base;
    t.channel_begin = begin;
    t.channel_end = begin + w;
    begin += w;
    taps.push_back(t);
  }

  const std::size_t c_in = geo.blocks[3].in_channels;
  for (std::size_t a : config.resolved_attach()) {
    TapSpec t;
    t.source = TapSpec::Source::Block4State;
    t.state_index = a - 1;
    t.channel_begin = config.block4_tap == Block4Tap::State ? 0 : c_in + (a - 1) * k;
    t.channel_end = c_in + a * k;
    t.height = geo.blocks[3].height;
    t.width = geo.blocks[3].width;
    taps.push_back(t);
  }
  return taps;
}

// ---------------------------------------------------------------------------

SubNetwork::SubNetwork(const std::string& name, std::size_t flatten_dim, std::size_t embedding_dim,
                       std::size_t num_classes, double init_std, RngStream& rng)
    : embedding_(name + ".embedding", flatten_dim, embedding_dim, init_std, rng),
      classifier_(name + ".classifier", embedding_dim, num_classes, init_std, rng) {}

BaseLearnerOutput SubNetwork::forward(const Tensor& tap) {
  tap_shape_ = tap.shape();
  const std::size_t n = tap.dim(0);
  Tensor flat = tap.reshaped({n, tap.size() / n});
  embedding_out_ = tanh_act(embedding_.forward(flat));
  return {embedding_out_, classifier_.forward(embedding_out_)};
}

Tensor SubNetwork::backward(const Tensor& grad_logits) {
  Tensor g = classifier_.backward(grad_logits);
  g = tanh_backward(embedding_out_, g);
  g = embedding_.backward(g);
  return g.reshaped(tap_shape_);
}

void SubNetwork::collect_parameters(std::vector<Parameter*>& out) {
  embedding_.collect_parameters(out);
  classifier_.collect_parameters(out);
}

EnsembleLoss ensemble_loss(std::span<const BaseLearnerOutput> outputs, std::span<const std::size_t> labels,
                           std::span<const double> head_weights) {
  if (outputs.empty()) throw ConfigError("ensemble_loss: no head outputs");
  if (!head_weights.empty() && head_weights.size() != outputs.size())
    throw ConfigError("ensemble_loss: " + std::to_string(head_weights.size()) + " weights for " +
                      std::to_string(outputs.size()) + " heads");
  EnsembleLoss loss;
  const std::size_t n = labels.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t h = 0; h < outputs.size(); ++h) {
    const double weight = head_weights.empty() ? 1.0 : head_weights[h];
    CrossEntropyResult ce = softmax_cross_entropy(outputs[h].logits, labels);
    double sum = 0.0;
    for (double l : ce.losses) sum += l;
    const double mean = sum * inv_n;
    loss.per_head.push_back(mean);
    loss.total += weight * mean;

    const Tensor& logits = outputs[h].logits;
    const std::size_t classes = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = logits.data() + i * classes;
      if (static_cast<std::size_t>(std::max_element(row, row + classes) - row) == labels[i]) ++correct;
    }
    loss.accuracy.push_back(static_cast<double>(correct) * inv_n);

    for (double& g : ce.grad_logits.values()) g *= weight * inv_n;
    loss.grad_logits.push_back(std::move(ce.grad_logits));
  }
  return loss;
}

// ---------------------------------------------------------------------------

EnsembleModel::EnsembleModel(const EnsembleConfig& config, std::uint64_t seed)
    : config_(config), taps_((config.validate(), head_taps(config))), backbone_([&] {
        RngStream rng(derive_seed(seed, 0));
        return Backbone(config.backbone, rng);
      }()) {
  RngStream rng(derive_seed(seed, 1));
  for (std::size_t h = 0; h < taps_.size(); ++h)
    heads_.emplace_back("head" + std::to_string(h), taps_[h].flatten_dim(), config.embedding_dim,
                        config.num_classes, config.head_init_std, rng);
}

namespace {
const Tensor& tap_source(const BackboneTaps& taps, const TapSpec& spec) {
  return spec.source == TapSpec::Source::Block3Out ? taps.block3_out : taps.block4_states.at(spec.state_index);
}
}  // namespace

std::vector<BaseLearnerOutput> EnsembleModel::forward(const Tensor& input, Mode mode) {
  BackboneTaps taps = backbone_.forward(input, mode);
  std::vector<BaseLearnerOutput> outputs;
  outputs.reserve(heads_.size());
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const TapSpec& spec = taps_[h];
    const Tensor& src = tap_source(taps, spec);
    const bool whole = spec.channel_begin == 0 && spec.channel_end == src.dim(1);
    outputs.push_back(heads_[h].forward(whole ? src : channel_slice(src, spec.channel_begin, spec.channel_end)));
  }
  return outputs;
}

Tensor EnsembleModel::backward(std::span<const Tensor> grad_logits) {
  if (grad_logits.size() != heads_.size())
    throw ConfigError("ensemble backward: " + std::to_string(grad_logits.size()) + " gradients for " +
                      std::to_string(heads_.size()) + " heads");
  const BackboneGeometry& geo = backbone_.geometry();
  TapGrads grads;
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    if (grad_logits[h].empty()) continue;
    const std::size_t n = grad_logits[h].dim(0);
    Tensor g_tap = heads_[h].backward(grad_logits[h]);
    const TapSpec& spec = taps_[h];
    Tensor* slot;
    Shape full;
    if (spec.source == TapSpec::Source::Block3Out) {
      slot = &grads.block3_out;
      full = {n, geo.blocks[2].out_channels, geo.blocks[2].height, geo.blocks[2].width};
    } else {
      if (grads.block4_states.empty()) grads.block4_states.resize(config_.backbone.block_sizes[3]);
      slot = &grads.block4_states[spec.state_index];
      full = {n, geo.blocks[3].in_channels + (spec.state_index + 1) * config_.backbone.growth_rate,
              geo.blocks[3].height, geo.blocks[3].width};
    }
    if (slot->empty()) *slot = Tensor(full);
    add_channel_slice(*slot, g_tap, spec.channel_begin);
  }
  return backbone_.backward(grads);
}

Tensor EnsembleModel::embed(const Tensor& input, std::span<const std::size_t> heads, std::size_t chunk) {
  if (heads.empty()) throw ConfigError("embed: empty head subset");
  for (std::size_t h : heads)
    if (h >= heads_.size())
      throw ConfigError("embed: head " + std::to_string(h) + " outside [0," + std::to_string(heads_.size()) + ")");
  const std::size_t n = input.dim(0);
  const std::size_t per_image = input.size() / std::max<std::size_t>(n, 1);
  const std::size_t dim = heads.size() * config_.embedding_dim;
  Tensor out({n, dim});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    Shape shape = input.shape();
    shape[0] = count;
    std::vector<double> block(input.data() + start * per_image, input.data() + (start + count) * per_image);
    auto outputs = forward(Tensor(shape, std::move(block)), Mode::Eval);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < heads.size(); ++j) {
        const Tensor& e = outputs[heads[j]].embedding;
        std::copy_n(e.data() + i * config_.embedding_dim, config_.embedding_dim,
                    out.data() + (start + i) * dim + j * config_.embedding_dim);
      }
  }
  return out;
}

std::vector<Parameter*> EnsembleModel::parameters() {
  std::vector<Parameter*> out = shared_parameters();
  for (std::size_t h = 0; h < heads_.size(); ++h) heads_[h].collect_parameters(out);
  return out;
}

std::vector<Parameter*> EnsembleModel::shared_parameters() {
  std::vector<Parameter*> out;
  backbone_.collect_parameters(out);
  return out;
}

std::vector<Parameter*> EnsembleModel::head_parameters(std::size_t head) {
  std::vector<Parameter*> out;
  heads_.at(head).collect_parameters(out);
  return out;
}

std::vector<Tensor*> EnsembleModel::buffers() {
  std::vector<Tensor*> out;
  backbone_.collect_buffers(out);
  return out;
}

void EnsembleModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

void EnsembleModel::save(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  const std::string text = model_config_text(config_);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto params = parameters();
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) write_tensor(out, p->value);
  const auto bufs = buffers();
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(bufs.size()));
  for (const Tensor* b : bufs) write_tensor(out, *b);
  if (!out) throw DataError("failed writing checkpoint " + path);
}

EnsembleModel EnsembleModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  try {
    const auto len = io::read_le<std::uint32_t>(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), len)) throw DataError("truncated config header");
    EnsembleModel model(parse_model_config_text(text), 0);
    auto params = model.parameters();
    if (io::read_le<std::uint32_t>(in) != params.size()) throw DataError("parameter count mismatch");
    for (Parameter* p : params) {
      Tensor t = read_tensor(in);
      if (t.shape() != p->value.shape())
        throw DataError("parameter " + p->name + " has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(p->value.shape()));
      p->value = std::move(t);
    }
    auto bufs = model.buffers();
    if (io::read_le<std::uint32_t>(in) != bufs.size()) throw DataError("buffer count mismatch");
    for (Tensor* b : bufs) {
      Tensor t = read_tensor(in);
      if (t.shape() != b->shape()) throw DataError("buffer shape mismatch");
      *b = std::move(t);
    }
    return model;
  } catch (const DataError& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace densemble
