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

#include "densemble/flops.hpp"

#include <cstdio>
#include <numeric>
#include <ostream>

#include "densemble/errors.hpp"

namespace densemble {

LayerCost count_layer(const LayerSpec& layer, const Shape& input) {
  const std::string& k = layer.kind;
  auto need_chw = [&] {
    if (input.size() != 3) throw ConfigError(k + " layer expects a [C,H,W] input, got " + shape_string(input));
  };
  if (k == "conv") {
    need_chw();
    if (layer.out == 0 || layer.kernel == 0 || layer.stride == 0) throw ConfigError("conv layer needs out/kernel/stride");
    const std::size_t ho = conv_output_extent(input[1], layer.kernel, layer.stride, layer.pad);
    const std::size_t wo = conv_output_extent(input[2], layer.kernel, layer.stride, layer.pad);
    const std::uint64_t macs =
        std::uint64_t{layer.out} * input[0] * layer.kernel * layer.kernel * std::uint64_t{ho} * wo;
    return {{layer.out, ho, wo}, macs};
  }
  if (k == "linear") {
    if (input.size() != 1) throw ConfigError("linear layer expects a flat input, got " + shape_string(input));
    if (layer.out == 0) throw ConfigError("linear layer needs out > 0");
    return {{layer.out}, std::uint64_t{layer.out} * input[0]};
  }
  if (k == "batchnorm" || k == "relu" || k == "tanh") return {input, 0};
  if (k == "avgpool") {
    need_chw();
    if (layer.kernel == 0 || layer.stride == 0) throw ConfigError("avgpool needs window and stride");
    return {{input[0], conv_output_extent(input[1], layer.kernel, layer.stride, 0),
             conv_output_extent(input[2], layer.kernel, layer.stride, 0)},
            0};
  }
  if (k == "gap") {
    need_chw();
    return {{input[0]}, 0};
  }
  if (k == "flatten") return {{shape_size(input)}, 0};
  throw ConfigError("unknown layer kind \"" + k + "\"");
}

namespace {

class Walker {
 public:
  explicit Walker(FlopReport& report) : report_(report) {}

  Shape apply(const std::string& name, const LayerSpec& spec, const Shape& in, bool shared) {
    LayerCost c = count_layer(spec, in);
    report_.records.push_back({name, spec.kind, c.output, c.macs, shared});
    return c.output;
  }

  // Returns the block output shape; `states` receives the shape after each layer.
  Shape dense_block(const std::string& name, const DenseNetConfig& cfg, std::size_t layers, Shape x,
                    std::vector<Shape>* states) {
    const std::size_t k = cfg.growth_rate;
    for (std::size_t i = 0; i < layers; ++i) {
      const std::string p = name + ".layer" + std::to_string(i + 1);
      Shape y = apply(p + ".bn1", {"batchnorm"}, x, true);
      y = apply(p + ".relu1", {"relu"}, y, true);
      y = apply(p + ".conv1", {"conv", cfg.bottleneck_factor * k, 1, 1, 0}, y, true);
      y = apply(p + ".bn2", {"batchnorm"}, y, true);
      y = apply(p + ".relu2", {"relu"}, y, true);
      y = apply(p + ".conv2", {"conv", k, 3, 1, 1}, y, true);
      x = {x[0] + y[0], x[1], x[2]};
      if (states) states->push_back(x);
    }
    return x;
  }

  Shape backbone(const DenseNetConfig& cfg, Shape* block3_out, std::vector<Shape>* block4_states) {
    Shape x{cfg.input_channels, cfg.input_height, cfg.input_width};
    x = apply("stem.conv", {"conv", cfg.stem_channels, 7, 2, 3}, x, true);
    x = apply("stem.bn", {"batchnorm"}, x, true);
    x = apply("stem.relu", {"relu"}, x, true);
    x = apply("stem.pool", {"avgpool", 0, 2, 2}, x, true);
    for (std::size_t b = 0; b < 4; ++b) {
      const std::string name = "block" + std::to_string(b + 1);
      x = dense_block(name, cfg, cfg.block_sizes[b], x, b == 3 ? block4_states : nullptr);
      if (b == 2 && block3_out) *block3_out = x;
      if (b < 3) {
        const std::string t = "transition" + std::to_string(b + 1);
        x = apply(t + ".bn", {"batchnorm"}, x, true);
        x = apply(t + ".relu", {"relu"}, x, true);
        x = apply(t + ".conv", {"conv", transition_channels(x[0], cfg.compression), 1, 1, 0}, x, true);
        x = apply(t + ".pool", {"avgpool", 0, 2, 2}, x, true);
      }
    }
    return x;
  }

 private:
  FlopReport& report_;
};

void finalize(FlopReport& r) {
  r.shared_macs = r.head_macs = 0;
  for (const FlopRecord& rec : r.records) (rec.shared ? r.shared_macs : r.head_macs) += rec.macs;
  r.total_macs = r.shared_macs + r.head_macs;
  r.shared_fraction =
      r.total_macs ? static_cast<double>(r.shared_macs) / static_cast<double>(r.total_macs) : 0.0;
}

}  // namespace

FlopReport count_model(const EnsembleConfig& config, std::span<const std::size_t> heads) {
  config.validate();
  FlopReport report;
  Walker walk(report);
  walk.backbone(config.backbone, nullptr, nullptr);
  const auto taps = head_taps(config);
  for (std::size_t h : heads) {
    if (h >= taps.size())
      throw ConfigError("head " + std::to_string(h) + " outside [0," + std::to_string(taps.size()) + ")");
    const TapSpec& t = taps[h];
    const std::string p = "head" + std::to_string(h);
    Shape x = walk.apply(p + ".flatten", {"flatten"}, {t.channels(), t.height, t.width}, false);
    x = walk.apply(p + ".embedding", {"linear", config.embedding_dim}, x, false);
    walk.apply(p + ".tanh", {"tanh"}, x, false);
  }
  finalize(report);
  return report;
}

FlopReport count_model(const EnsembleConfig& config) {
  std::vector<std::size_t> all(config.num_heads());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return count_model(config, all);
}

FlopReport count_baseline(const DenseNetConfig& backbone, std::size_t embedding_dim) {
  backbone.validate();
  FlopReport report;
  Walker walk(report);
  Shape x = walk.backbone(backbone, nullptr, nullptr);
  x = walk.apply("head.gap", {"gap"}, x, false);
  walk.apply("head.embedding", {"linear", embedding_dim}, x, false);
  finalize(report);
  return report;
}

void FlopReport::write_table(std::ostream& out) const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s %-10s %-16s %16s\n", "layer", "kind", "output", "MACs");
  out << buf;
  for (const FlopRecord& r : records) {
    if (r.macs == 0) continue;
    std::snprintf(buf, sizeof buf, "%-28s %-10s %-16s %16llu\n", r.name.c_str(), r.kind.c_str(),
                  shape_string(r.output).c_str(), static_cast<unsigned long long>(r.macs));
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "shared  %.6f GMACs\nheads   %.6f GMACs\ntotal   %.6f GMACs (reported as GFLOPs)\n"
                "shared fraction %.6f\n",
                static_cast<double>(shared_macs) * 1e-9, static_cast<double>(head_macs) * 1e-9,
                static_cast<double>(total_macs) * 1e-9, shared_fraction);
  out << buf;
}

void FlopReport::write_csv(std::ostream& out) const {
  out << "name,kind,output_shape,macs,shared\n";
  for (const FlopRecord& r : records) {
    std::string shape;
    for (std::size_t i = 0; i < r.output.size(); ++i) shape += (i ? "x" : "") + std::to_string(r.output[i]);
    out << r.name << ',' << r.kind << ',' << shape << ',' << r.macs << ',' << (r.shared ? 1 : 0) << '\n';
  }
  char buf[64];
  out << "total_shared,,," << shared_macs << ",1\n";
  out << "total_heads,,," << head_macs << ",0\n";
  out << "total,,," << total_macs << ",\n";
  std::snprintf(buf, sizeof buf, "shared_fraction,,,%.10g,\n", shared_fraction);
  out << buf;
}

}  // namespace densemble
