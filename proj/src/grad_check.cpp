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

#include "densemble/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "densemble/errors.hpp"
#include "densemble/rng.hpp"

namespace densemble {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t max_coords, RngStream& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_coords == 0 || max_coords >= size) return idx;
  for (std::size_t i = 0; i < max_coords; ++i) std::swap(idx[i], idx[i + rng.below(size - i)]);
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport check_gradients(const std::string& name, const LossTerms& terms, std::span<const GradVariable> vars,
                                const GradCheckOptions& options) {
  GradCheckReport report;
  report.name = name;
  RngStream rng(derive_seed(options.seed, 0x6C));
  const double h = options.step;
  for (const GradVariable& v : vars) {
    if (v.value->shape() != v.analytic->shape())
      throw ConfigError("grad check " + name + ": analytic gradient of " + v.name + " has shape " +
                        shape_string(v.analytic->shape()) + ", value has " + shape_string(v.value->shape()));
    for (std::size_t i : pick_coords(v.value->size(), options.max_coords, rng)) {
      double& x = (*v.value)[i];
      const double saved = x;
      ReluPatternProbe probe_plus, probe_minus;
      x = saved + h;
      set_relu_probe(&probe_plus);
      const std::vector<double> plus = terms();
      x = saved - h;
      set_relu_probe(&probe_minus);
      const std::vector<double> minus = terms();
      set_relu_probe(nullptr);
      x = saved;
      if (probe_plus.digest() != probe_minus.digest()) {
        ++report.kink_skipped;
        continue;
      }
      double diff = 0.0;
      for (std::size_t t = 0; t < plus.size(); ++t) diff += plus[t] - minus[t];
      const double numeric = diff / (2.0 * h);
      const double analytic = (*v.analytic)[i];
      const double err = relative_error(analytic, numeric);
      ++report.coords;
      if (err > report.max_rel_error || report.coords == 1) {
        report.max_rel_error = err;
        report.worst = {v.name, i, analytic, numeric, err};
      }
    }
  }
  return report;
}

const std::vector<std::string>& primitive_kinds() {
  static const std::vector<std::string> kinds{"conv2d",     "linear",        "batchnorm_train", "batchnorm_eval",
                                              "relu",       "tanh",          "avgpool",         "concat",
                                              "channel_slice", "softmax_ce", "ensemble_loss",   "dense_layer",
                                              "transition", "subnetwork"};
  return kinds;
}

namespace {

std::size_t pick(RngStream& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

Tensor normal_tensor(const Shape& shape, RngStream& rng, double std = 1.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal(0.0, std);
  return t;
}

std::vector<double> weighted(const Tensor& y, const Tensor& r) {
  if (y.shape() != r.shape()) throw ConfigError("probe shape mismatch: " + shape_string(y.shape()));
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * r[i];
  return out;
}

struct ParamVars {
  std::vector<Parameter*> params;
  std::vector<GradVariable> vars;

  void add_params() {
    for (Parameter* p : params) vars.push_back({p->name, &p->value, &p->grad});
  }
};

std::string describe(const std::vector<std::pair<std::string, std::size_t>>& fields) {
  std::ostringstream s;
  for (std::size_t i = 0; i < fields.size(); ++i) s << (i ? " " : "") << fields[i].first << '=' << fields[i].second;
  return s.str();
}

GradCheckReport run_primitive(const std::string& kind, RngStream& rng, const GradCheckOptions& opt) {
  if (kind == "conv2d") {
    const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 4), cout = pick(rng, 1, 4);
    const std::size_t k = rng.bernoulli(0.5) ? 3 : 1, stride = pick(rng, 1, 2), pad = k == 3 ? pick(rng, 0, 1) : 0;
    const std::size_t h = pick(rng, k, 7), w = pick(rng, k, 7);
    Tensor x = normal_tensor({n, cin, h, w}, rng), wt = normal_tensor({cout, cin, k, k}, rng);
    const Tensor r = normal_tensor({n, cout, conv_output_extent(h, k, stride, pad), conv_output_extent(w, k, stride, pad)}, rng);
    const Conv2dGrads g = conv2d_backward(x, wt, r, stride, pad);
    const GradVariable vars[] = {{"input", &x, &g.input}, {"weight", &wt, &g.weight}};
    auto rep = check_gradients(kind, [&] { return weighted(conv2d(x, wt, stride, pad), r); }, vars, opt);
    rep.detail = describe({{"n", n}, {"cin", cin}, {"cout", cout}, {"k", k}, {"stride", stride}, {"pad", pad},
                           {"h", h}, {"w", w}});
    return rep;
  }
  if (kind == "linear") {
    const std::size_t n = pick(rng, 1, 3), din = pick(rng, 1, 8), dout = pick(rng, 1, 6);
    Tensor x = normal_tensor({n, din}, rng), wt = normal_tensor({dout, din}, rng), b = normal_tensor({dout}, rng);
    const Tensor r = normal_tensor({n, dout}, rng);
    const LinearGrads g = linear_backward(x, wt, r);
    const GradVariable vars[] = {{"input", &x, &g.input}, {"weight", &wt, &g.weight}, {"bias", &b, &g.bias}};
    auto rep = check_gradients(kind, [&] { return weighted(linear(x, wt, b), r); }, vars, opt);
    rep.detail = describe({{"n", n}, {"din", din}, {"dout", dout}});
    return rep;
  }
  if (kind == "batchnorm_train" || kind == "batchnorm_eval") {
    const bool train = kind == "batchnorm_train";
    // Train mode needs a few samples per channel: with two, x_hat is +-1
    // whatever the input and the input gradient collapses to O(eps).
    const std::size_t n = pick(rng, 2, 3), c = pick(rng, 1, 3), h = pick(rng, train ? 2 : 1, 3),
                      w = pick(rng, 1, 3);
    Tensor x = normal_tensor({n, c, h, w}, rng), gamma = normal_tensor({c}, rng), beta = normal_tensor({c}, rng);
    for (double& v : x.values()) v = 0.5 + 2.0 * v;
    BatchNormState init(c);
    for (std::size_t i = 0; i < c; ++i) {
      init.running_mean[i] = rng.normal();
      init.running_var[i] = rng.uniform(0.5, 2.0);
    }
    const Tensor r = normal_tensor(x.shape(), rng);
    const Mode mode = train ? Mode::Train : Mode::Eval;
    BatchNormState state = init;
    BatchNormCache cache;
    batchnorm(x, gamma, beta, state, mode, &cache);
    const BatchNormGrads g = batchnorm_backward(cache, gamma, r);
    const GradVariable vars[] = {{"input", &x, &g.input}, {"gamma", &gamma, &g.gamma}, {"beta", &beta, &g.beta}};
    auto rep = check_gradients(
        kind,
        [&] {
          BatchNormState s = init;
          return weighted(batchnorm(x, gamma, beta, s, mode, nullptr), r);
        },
        vars, opt);
    rep.detail = describe({{"n", n}, {"c", c}, {"h", h}, {"w", w}});
    return rep;
  }
  if (kind == "relu" || kind == "tanh") {
    const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 3), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
    Tensor x = normal_tensor({n, c, h, w}, rng);
    // relu is not differentiable at 0; keep inputs clear of the kink.
    if (kind == "relu")
      for (double& v : x.values()) v = (v < 0 ? -1.0 : 1.0) * (1e-3 + std::abs(v));
    const Tensor r = normal_tensor(x.shape(), rng);
    const bool is_relu = kind == "relu";
    const Tensor g = is_relu ? relu_backward(x, r) : tanh_backward(tanh_act(x), r);
    const GradVariable vars[] = {{"input", &x, &g}};
    auto rep = check_gradients(kind, [&] { return weighted(is_relu ? relu(x) : tanh_act(x), r); }, vars, opt);
    rep.detail = describe({{"n", n}, {"c", c}, {"h", h}, {"w", w}});
    return rep;
  }
  if (kind == "avgpool") {
    const std::size_t win = pick(rng, 1, 3), n = pick(rng, 1, 2), c = pick(rng, 1, 3);
    const std::size_t h = win * pick(rng, 1, 3), w = win * pick(rng, 1, 3);
    Tensor x = normal_tensor({n, c, h, w}, rng);
    const Tensor r = normal_tensor({n, c, h / win, w / win}, rng);
    const Tensor g = avgpool2d_backward(x.shape(), r, win, win);
    const GradVariable vars[] = {{"input", &x, &g}};
    auto rep = check_gradients(kind, [&] { return weighted(avgpool2d(x, win, win), r); }, vars, opt);
    rep.detail = describe({{"window", win}, {"n", n}, {"c", c}, {"h", h}, {"w", w}});
    return rep;
  }
  if (kind == "concat" || kind == "channel_slice") {
    const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
    if (kind == "concat") {
      const std::size_t parts = pick(rng, 2, 3);
      std::vector<Tensor> xs;
      std::vector<std::size_t> widths;
      for (std::size_t p = 0; p < parts; ++p) {
        widths.push_back(pick(rng, 1, 3));
        xs.push_back(normal_tensor({n, widths.back(), h, w}, rng));
      }
      const std::size_t total = std::accumulate(widths.begin(), widths.end(), std::size_t{0});
      const Tensor r = normal_tensor({n, total, h, w}, rng);
      const std::vector<Tensor> g = split_channels(r, widths);
      std::vector<GradVariable> vars;
      for (std::size_t p = 0; p < parts; ++p) vars.push_back({"input" + std::to_string(p), &xs[p], &g[p]});
      auto rep = check_gradients(kind, [&] { return weighted(concat_channels(xs), r); }, vars, opt);
      rep.detail = describe({{"parts", parts}, {"channels", total}});
      return rep;
    }
    const std::size_t c = pick(rng, 2, 5), begin = pick(rng, 0, c - 1), end = pick(rng, begin + 1, c);
    Tensor x = normal_tensor({n, c, h, w}, rng);
    const Tensor r = normal_tensor({n, end - begin, h, w}, rng);
    Tensor g = Tensor::zeros_like(x);
    add_channel_slice(g, r, begin);
    const GradVariable vars[] = {{"input", &x, &g}};
    auto rep = check_gradients(kind, [&] { return weighted(channel_slice(x, begin, end), r); }, vars, opt);
    rep.detail = describe({{"c", c}, {"begin", begin}, {"end", end}});
    return rep;
  }
  if (kind == "softmax_ce") {
    const std::size_t n = pick(rng, 1, 4), k = pick(rng, 2, 7);
    Tensor logits = normal_tensor({n, k}, rng, 2.0);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(k);
    const Tensor g = softmax_cross_entropy(logits, labels).grad_logits;
    const GradVariable vars[] = {{"logits", &logits, &g}};
    auto rep = check_gradients(kind, [&] { return softmax_cross_entropy(logits, labels).losses; }, vars, opt);
    rep.detail = describe({{"n", n}, {"classes", k}});
    return rep;
  }
  if (kind == "ensemble_loss") {
    const std::size_t n = pick(rng, 1, 4), k = pick(rng, 2, 6), heads = pick(rng, 1, 4);
    std::vector<BaseLearnerOutput> outs(heads);
    std::vector<double> weights(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      outs[hd].logits = normal_tensor({n, k}, rng);
      weights[hd] = rng.uniform(0.5, 1.5);
    }
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(k);
    const EnsembleLoss loss = ensemble_loss(outs, labels, weights);
    std::vector<GradVariable> vars;
    for (std::size_t hd = 0; hd < heads; ++hd)
      vars.push_back({"head" + std::to_string(hd), &outs[hd].logits, &loss.grad_logits[hd]});
    auto rep = check_gradients(
        kind,
        [&] {
          std::vector<double> terms;
          for (std::size_t hd = 0; hd < heads; ++hd)
            for (double l : softmax_cross_entropy(outs[hd].logits, labels).losses)
              terms.push_back(weights[hd] * l / static_cast<double>(n));
          return terms;
        },
        vars, opt);
    rep.detail = describe({{"n", n}, {"classes", k}, {"heads", heads}});
    return rep;
  }
  if (kind == "dense_layer" || kind == "transition") {
    const bool dense = kind == "dense_layer";
    const std::size_t n = 2, c = pick(rng, 2, 6);
    const std::size_t h = dense ? pick(rng, 2, 4) : 2 * pick(rng, 1, 2), w = dense ? pick(rng, 2, 4) : 2 * pick(rng, 1, 2);
    const std::size_t k = pick(rng, 2, 4), bf = pick(rng, 2, 4);
    Tensor x = normal_tensor({n, c, h, w}, rng);
    RngStream init(rng.next_u64());
    ParamVars pv;
    std::function<Tensor(const Tensor&)> fwd;
    std::function<Tensor(const Tensor&)> bwd;
    std::optional<DenseLayer> layer;
    std::optional<Transition> trans;
    if (dense) {
      layer.emplace("layer", c, k, bf, init);
      layer->collect_parameters(pv.params);
      fwd = [&](const Tensor& in) { return layer->forward(in, Mode::Train); };
      bwd = [&](const Tensor& g) { return layer->backward(g); };
    } else {
      trans.emplace("transition", c, 0.5, init);
      trans->collect_parameters(pv.params);
      fwd = [&](const Tensor& in) { return trans->forward(in, Mode::Train); };
      bwd = [&](const Tensor& g) { return trans->backward(g); };
    }
    // Non-trivial affine parameters so every path carries gradient.
    for (Parameter* p : pv.params)
      if (p->value.rank() == 1)
        for (double& v : p->value.values()) v = rng.uniform(0.5, 1.5) * (p->name.ends_with("beta") ? 0.2 : 1.0);
    const Tensor y = fwd(x);
    const Tensor r = normal_tensor(y.shape(), rng);
    for (Parameter* p : pv.params) p->zero_grad();
    const Tensor gx = bwd(r);
    pv.vars.push_back({"input", &x, &gx});
    pv.add_params();
    auto rep = check_gradients(kind, [&] { return weighted(fwd(x), r); }, pv.vars, opt);
    rep.detail = describe({{"c", c}, {"h", h}, {"w", w}, {"growth", k}, {"bottleneck", bf}});
    return rep;
  }
  if (kind == "subnetwork") {
    const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 3), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
    const std::size_t emb = pick(rng, 2, 6), classes = pick(rng, 2, 5);
    RngStream init(rng.next_u64());
    SubNetwork net("head", c * h * w, emb, classes, 0.5, init);
    ParamVars pv;
    net.collect_parameters(pv.params);
    Tensor x = normal_tensor({n, c, h, w}, rng);
    const Tensor r = normal_tensor({n, classes}, rng);
    net.forward(x);
    for (Parameter* p : pv.params) p->zero_grad();
    const Tensor gx = net.backward(r);
    pv.vars.push_back({"tap", &x, &gx});
    pv.add_params();
    auto rep = check_gradients(kind, [&] { return weighted(net.forward(x).logits, r); }, pv.vars, opt);
    rep.detail = describe({{"flatten", c * h * w}, {"embedding", emb}, {"classes", classes}});
    return rep;
  }
  throw ConfigError("unknown grad-check primitive \"" + kind + "\"");
}

}  // namespace

GradCheckReport check_primitive(const std::string& kind, std::uint64_t seed, const GradCheckOptions& options) {
  std::uint64_t tag = 0;
  for (char ch : kind) tag = tag * 131 + static_cast<unsigned char>(ch);
  RngStream rng(derive_seed(seed, tag));
  GradCheckOptions opt = options;
  opt.seed = derive_seed(seed, tag, 1);
  return run_primitive(kind, rng, opt);
}

GradCheckReport check_model(const EnsembleConfig& config, std::uint64_t seed, std::size_t batch,
                            const GradCheckOptions& options) {
  if (batch < 2) throw ConfigError("model grad check needs a batch of at least 2 for batchnorm statistics");
  EnsembleModel model(config, seed);
  RngStream rng(derive_seed(seed, 0x4D));
  const DenseNetConfig& bb = config.backbone;
  Tensor input({batch, bb.input_channels, bb.input_height, bb.input_width});
  for (double& v : input.values()) v = rng.uniform();
  std::vector<std::size_t> labels(batch);
  for (auto& l : labels) l = rng.below(config.num_classes);

  model.zero_grad();
  const auto outputs = model.forward(input, Mode::Train);
  const EnsembleLoss loss = ensemble_loss(outputs, labels);
  const Tensor grad_input = model.backward(loss.grad_logits);

  std::vector<GradVariable> vars{{"input", &input, &grad_input}};
  for (Parameter* p : model.parameters()) vars.push_back({p->name, &p->value, &p->grad});
  GradCheckOptions opt = options;
  opt.seed = derive_seed(seed, 0x4D, 1);
  auto rep = check_gradients(
      "ensemble_model",
      [&] {
        // Each term is CE - log(C) = log(mean_k exp(z_k - z_y)), evaluated
        // as log1p(mean expm1(.)). The shift is constant, and the terms stay
        // near zero where their rounding error is far below that of CE itself.
        std::vector<double> terms;
        for (const BaseLearnerOutput& out : model.forward(input, Mode::Train)) {
          const std::size_t classes = out.logits.dim(1);
          for (std::size_t n = 0; n < batch; ++n) {
            const double zy = out.logits.at(n, labels[n]);
            double mean = 0.0;
            for (std::size_t k = 0; k < classes; ++k) mean += std::expm1(out.logits.at(n, k) - zy);
            mean /= static_cast<double>(classes);
            terms.push_back(std::log1p(mean) / static_cast<double>(batch));
          }
        }
        return terms;
      },
      vars, opt);
  rep.detail = "heads=" + std::to_string(config.num_heads()) + " batch=" + std::to_string(batch) +
               " params=" + std::to_string(vars.size() - 1);
  return rep;
}

}  // namespace densemble
