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

#include "densemble/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "densemble/errors.hpp"

namespace densemble {
namespace {
constexpr std::uint64_t kShuffleStream = 0x5348554646ull;
constexpr std::uint64_t kAugmentStream = 0x4155474dull;
}  // namespace

void RandomErasingParams::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw ConfigError("random erasing probability must lie in [0,1], got " + std::to_string(probability));
  if (!(area_lo > 0.0 && area_lo <= area_hi && area_hi < 1.0))
    throw ConfigError("random erasing area range must satisfy 0 < lo <= hi < 1");
  if (!(aspect_lo > 0.0 && aspect_lo <= aspect_hi))
    throw ConfigError("random erasing aspect range must satisfy 0 < lo <= hi");
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.batch_size = 32;
  c.lr0 = 0.05;
  c.epochs = 50;
  c.decay_epoch = 40;
  c.decay_factor = 0.1;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr0 >= 0.0)) throw ConfigError("train.lr must be non-negative");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (decay_epoch > epochs) throw ConfigError("train.decay_epoch must not exceed train.epochs");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("train.decay_factor must lie in (0,1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  augment.erasing.validate();
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  return epoch < config.decay_epoch ? config.lr0 : config.lr0 * config.decay_factor;
}

void sgd_step(std::span<Parameter* const> params, double lr, double momentum, double weight_decay) {
  for (Parameter* p : params) {
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* v = p->momentum.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }
}

ErasingResult random_erasing(const Tensor& image, RngStream& rng, const RandomErasingParams& params) {
  ErasingResult result{image, std::nullopt};
  if (!rng.bernoulli(params.probability)) return result;
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  const double area = static_cast<double>(h * w);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double target = rng.uniform(params.area_lo, params.area_hi) * area;
    const double aspect = rng.uniform(params.aspect_lo, params.aspect_hi);
    const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (eh == 0 || ew == 0 || eh >= h || ew >= w) continue;
    // Rounding can push the realised area outside the requested range.
    const double frac = static_cast<double>(eh * ew) / area;
    if (frac < params.area_lo || frac > params.area_hi) continue;
    EraseRect r{rng.below(h - eh + 1), rng.below(w - ew + 1), eh, ew};
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = r.top; y < r.top + r.height; ++y)
        for (std::size_t x = r.left; x < r.left + r.width; ++x) result.image[(c * h + y) * w + x] = rng.uniform();
    result.rect = r;
    return result;
  }
  return result;
}

Tensor horizontal_flip(const Tensor& image) {
  const std::size_t rows = image.dim(0) * image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t x = 0; x < w; ++x) out[r * w + x] = image[r * w + (w - 1 - x)];
  return out;
}

Tensor pad_crop(const Tensor& image, std::size_t pad, std::size_t dy, std::size_t dx) {
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y) {
      // padded coordinate (y + dy) maps to source row y + dy - pad
      if (y + dy < pad || y + dy - pad >= h) continue;
      const std::size_t sy = y + dy - pad;
      for (std::size_t x = 0; x < w; ++x) {
        if (x + dx < pad || x + dx - pad >= w) continue;
        out[(c * h + y) * w + x] = image[(c * h + sy) * w + (x + dx - pad)];
      }
    }
  return out;
}

Tensor augment(const Tensor& image, RngStream& rng, const AugmentSwitches& switches) {
  Tensor out = image;
  if (switches.flip && rng.bernoulli(0.5)) out = horizontal_flip(out);
  if (switches.crop && switches.crop_pad > 0) {
    const std::size_t dy = rng.below(2 * switches.crop_pad + 1);
    const std::size_t dx = rng.below(2 * switches.crop_pad + 1);
    out = pad_crop(out, switches.crop_pad, dy, dx);
  }
  if (switches.random_erasing) out = random_erasing(out, rng, switches.erasing).image;
  return out;
}

void TrainLog::write_csv(std::ostream& out) const {
  const std::size_t heads = epochs.empty() ? 0 : epochs.front().head_loss.size();
  out << "epoch,lr,total_loss";
  for (std::size_t h = 0; h < heads; ++h) out << ",head_" << h << "_loss";
  for (std::size_t h = 0; h < heads; ++h) out << ",head_" << h << "_acc";
  out << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
  };
  for (const EpochRecord& r : epochs) {
    out << r.epoch << ',' << num(r.lr) << ',' << num(r.total_loss);
    for (double v : r.head_loss) out << ',' << num(v);
    for (double v : r.head_accuracy) out << ',' << num(v);
    out << '\n';
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(derive_seed(seed ^ kShuffleStream, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

TrainLog train(EnsembleModel& model, const TrainingSet& data, const TrainConfig& config,
               const EpochCallback& on_epoch) {
  config.validate();
  if (data.images.empty()) throw DataError("training set is empty");
  if (data.images.size() != data.labels.size()) throw DataError("training set has mismatched image/label counts");
  const std::size_t classes = model.config().num_classes;
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    if (data.labels[i] >= classes)
      throw DataError("training sample " + std::to_string(i) + " has label " + std::to_string(data.labels[i]) +
                      " outside [0," + std::to_string(classes) + ")");
  const std::size_t n = data.images.size();
  const std::size_t batch = config.batch_size;
  const std::size_t batches = n / batch;
  if (batches == 0)
    throw DataError("training set of " + std::to_string(n) + " images is smaller than batch size " +
                    std::to_string(batch));

  const Shape& img_shape = data.images.front().shape();
  const std::size_t per_image = data.images.front().size();
  const std::size_t heads = model.config().num_heads();
  const auto params = model.parameters();
  TrainLog log;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    const auto order = epoch_order(n, config.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.head_loss.assign(heads, 0.0);
    rec.head_accuracy.assign(heads, 0.0);

    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<Tensor> augmented(batch);
      std::vector<std::size_t> labels(batch);
#pragma omp parallel for schedule(static)
      for (long ii = 0; ii < static_cast<long>(batch); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const std::size_t idx = order[b * batch + i];
        RngStream rng(derive_seed(config.seed ^ kAugmentStream, epoch, idx));
        augmented[i] = augment(data.images[idx], rng, config.augment);
        labels[i] = data.labels[idx];
      }
      Shape shape{batch};
      shape.insert(shape.end(), img_shape.begin(), img_shape.end());
      Tensor input(shape);
      for (std::size_t i = 0; i < batch; ++i)
        std::copy_n(augmented[i].data(), per_image, input.data() + i * per_image);

      model.zero_grad();
      const auto outputs = model.forward(input, Mode::Train);
      const EnsembleLoss loss = ensemble_loss(outputs, labels);
      model.backward(loss.grad_logits);
      sgd_step(params, lr, config.momentum, config.weight_decay);

      rec.total_loss += loss.total;
      for (std::size_t h = 0; h < heads; ++h) {
        rec.head_loss[h] += loss.per_head[h];
        rec.head_accuracy[h] += loss.accuracy[h];
      }
    }
    const double inv = 1.0 / static_cast<double>(batches);
    rec.total_loss *= inv;
    for (std::size_t h = 0; h < heads; ++h) {
      rec.head_loss[h] *= inv;
      rec.head_accuracy[h] *= inv;
    }
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(log.epochs.back(), model);
  }
  return log;
}

}  // namespace densemble
