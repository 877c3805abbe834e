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

#include "densemble/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "densemble/errors.hpp"

namespace densemble {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ConfigError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                      shape_string(t.shape()));
}

// Output positions o in [lo, hi) for which o*stride + k - pad lands in [0, in).
struct ValidRange {
  std::size_t lo, hi;
};

ValidRange valid_outputs(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
  // need o*stride + k >= pad  and  o*stride + k - pad < in
  std::size_t lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > k) hi = std::min(out, (in + pad - k - 1) / stride + 1);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (in + 2 * pad < kernel)
    throw ConfigError("conv2d: kernel " + std::to_string(kernel) + " exceeds padded extent " +
                      std::to_string(in + 2 * pad));
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t pad) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t n_batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin)
    throw ConfigError("conv2d: input " + shape_string(input.shape()) + " has " + std::to_string(cin) +
                      " channels but weight " + shape_string(weight.shape()) + " expects " +
                      std::to_string(weight.dim(1)));
  const std::size_t ho = conv_output_extent(h, kh, stride, pad);
  const std::size_t wo = conv_output_extent(w, kw, stride, pad);
  Tensor out({n_batch, cout, ho, wo});

  const auto jobs = static_cast<long>(n_batch * cout);
#pragma omp parallel for schedule(static)
  for (long job = 0; job < jobs; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / cout, co = static_cast<std::size_t>(job) % cout;
    double* dst = out.data() + (n * cout + co) * ho * wo;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = input.data() + (n * cin + ci) * h * w;
      const double* wk = weight.data() + (co * cin + ci) * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const ValidRange ry = valid_outputs(h, ho, ky, stride, pad);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const ValidRange rx = valid_outputs(w, wo, kx, stride, pad);
          const double wv = wk[ky * kw + kx];
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row = src + (oy * stride + ky - pad) * w;
            double* orow = dst + oy * wo;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * row[ox * stride + kx - pad];
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output, std::size_t stride,
                            std::size_t pad) {
  const std::size_t n_batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t ho = grad_output.dim(2), wo = grad_output.dim(3);
  if (grad_output.shape() != Shape{n_batch, cout, conv_output_extent(h, kh, stride, pad),
                                   conv_output_extent(w, kw, stride, pad)})
    throw ConfigError("conv2d_backward: grad_output shape " + shape_string(grad_output.shape()) +
                      " inconsistent with forward");
  Conv2dGrads g{Tensor(input.shape()), Tensor(weight.shape())};

#pragma omp parallel for schedule(static)
  for (long nn = 0; nn < static_cast<long>(n_batch); ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    for (std::size_t co = 0; co < cout; ++co) {
      const double* gy = grad_output.data() + (n * cout + co) * ho * wo;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* gx = g.input.data() + (n * cin + ci) * h * w;
        const double* wk = weight.data() + (co * cin + ci) * kh * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const ValidRange ry = valid_outputs(h, ho, ky, stride, pad);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const ValidRange rx = valid_outputs(w, wo, kx, stride, pad);
            const double wv = wk[ky * kw + kx];
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              double* row = gx + (oy * stride + ky - pad) * w;
              const double* grow = gy + oy * wo;
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) row[ox * stride + kx - pad] += wv * grow[ox];
            }
          }
        }
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (long cc = 0; cc < static_cast<long>(cout); ++cc) {
    const auto co = static_cast<std::size_t>(cc);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      double* gw = g.weight.data() + (co * cin + ci) * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const ValidRange ry = valid_outputs(h, ho, ky, stride, pad);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const ValidRange rx = valid_outputs(w, wo, kx, stride, pad);
          double acc = 0.0;
          for (std::size_t n = 0; n < n_batch; ++n) {
            const double* src = input.data() + (n * cin + ci) * h * w;
            const double* gy = grad_output.data() + (n * cout + co) * ho * wo;
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              const double* row = src + (oy * stride + ky - pad) * w;
              const double* grow = gy + oy * wo;
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * row[ox * stride + kx - pad];
            }
          }
          gw[ky * kw + kx] = acc;
        }
      }
    }
  }
  return g;
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                 BatchNormCache* cache, double eps, double momentum) {
  require_rank(input, 4, "batchnorm input");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (gamma.size() != channels || beta.size() != channels || state.running_mean.size() != channels)
    throw ConfigError("batchnorm: parameters sized for " + std::to_string(gamma.size()) + " channels, input " +
                      shape_string(input.shape()));
  const std::size_t count = n_batch * plane;
  if (mode == Mode::Train && count < 2)
    throw ConfigError("batchnorm: train mode needs at least 2 values per channel, got " + std::to_string(count));

  Tensor out(input.shape());
  Tensor normalized(input.shape());
  std::vector<double> inv_std(channels);

  for (std::size_t c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const double* src = input.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      }
      mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const double* src = input.data() + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (src[i] - mean) * (src[i] - mean);
      }
      var = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mean;
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[c] = is;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (input[off + i] - mean) * is;
        normalized[off + i] = xh;
        out[off + i] = gamma[c] * xh + beta[c];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& grad_output) {
  const Tensor& xh = cache.normalized;
  if (grad_output.shape() != xh.shape())
    throw ConfigError("batchnorm_backward: grad shape " + shape_string(grad_output.shape()) + " vs cached " +
                      shape_string(xh.shape()));
  const std::size_t n_batch = xh.dim(0), channels = xh.dim(1), plane = xh.dim(2) * xh.dim(3);
  const double m = static_cast<double>(n_batch * plane);
  BatchNormGrads g{Tensor(xh.shape()), Tensor(Shape{channels}), Tensor(Shape{channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_gy = 0.0, sum_gy_xh = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_gy += grad_output[off + i];
        sum_gy_xh += grad_output[off + i] * xh[off + i];
      }
    }
    g.beta[c] = sum_gy;
    g.gamma[c] = sum_gy_xh;
    const double scale = gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        if (cache.mode == Mode::Train)
          g.input[off + i] = scale * (grad_output[off + i] - sum_gy / m - xh[off + i] * sum_gy_xh / m);
        else
          g.input[off + i] = scale * grad_output[off + i];
      }
    }
  }
  return g;
}

namespace {
ReluPatternProbe* g_relu_probe = nullptr;
}  // namespace

void ReluPatternProbe::absorb(const Tensor& input) {
  for (std::size_t i = 0; i < input.size(); ++i) {
    hash_ ^= input[i] > 0.0 ? 0x9E3779B97F4A7C15ull : 0x2545F4914F6CDD1Dull;
    hash_ *= 0x100000001B3ull;
    hash_ ^= hash_ >> 29;
  }
  count_ += input.size();
}

void set_relu_probe(ReluPatternProbe* probe) { g_relu_probe = probe; }

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  if (g_relu_probe) g_relu_probe->absorb(input);
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  return g;
}

Tensor tanh_act(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::tanh(input[i]);
  return out;
}

Tensor tanh_backward(const Tensor& output, const Tensor& grad_output) {
  Tensor g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) g[i] = grad_output[i] * (1.0 - output[i] * output[i]);
  return g;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n_batch = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din || bias.size() != dout)
    throw ConfigError("linear: input " + shape_string(input.shape()) + ", weight " + shape_string(weight.shape()) +
                      ", bias " + shape_string(bias.shape()));
  Tensor out({n_batch, dout});
#pragma omp parallel for schedule(static)
  for (long nn = 0; nn < static_cast<long>(n_batch); ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    const double* x = input.data() + n * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double* wr = weight.data() + o * din;
      double acc = 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += wr[i] * x[i];
      out[n * dout + o] = acc + bias[o];
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output) {
  const std::size_t n_batch = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  if (grad_output.shape() != Shape{n_batch, dout})
    throw ConfigError("linear_backward: grad shape " + shape_string(grad_output.shape()));
  LinearGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor(Shape{dout})};
#pragma omp parallel for schedule(static)
  for (long nn = 0; nn < static_cast<long>(n_batch); ++nn) {
    const auto n = static_cast<std::size_t>(nn);
    double* gx = g.input.data() + n * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double go = grad_output[n * dout + o];
      const double* wr = weight.data() + o * din;
      for (std::size_t i = 0; i < din; ++i) gx[i] += go * wr[i];
    }
  }
#pragma omp parallel for schedule(static)
  for (long oo = 0; oo < static_cast<long>(dout); ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    double* gw = g.weight.data() + o * din;
    double gb = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const double go = grad_output[n * dout + o];
      gb += go;
      const double* x = input.data() + n * din;
      for (std::size_t i = 0; i < din; ++i) gw[i] += go * x[i];
    }
    g.bias[o] = gb;
  }
  return g;
}

namespace {
std::size_t pool_extent(std::size_t in, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0 || in < window || (in - window) % stride != 0)
    throw ConfigError("avgpool2d: extent " + std::to_string(in) + " incompatible with window " +
                      std::to_string(window) + " stride " + std::to_string(stride));
  return (in - window) / stride + 1;
}
}  // namespace

Tensor avgpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 4, "avgpool2d input");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t ho = pool_extent(h, window, stride), wo = pool_extent(w, window, stride);
  Tensor out({n_batch, channels, ho, wo});
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t p = 0; p < n_batch * channels; ++p) {
    const double* src = input.data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < window; ++ky)
          for (std::size_t kx = 0; kx < window; ++kx) acc += src[(oy * stride + ky) * w + ox * stride + kx];
        dst[oy * wo + ox] = acc * inv;
      }
  }
  return out;
}

Tensor avgpool2d_backward(const Shape& input_shape, const Tensor& grad_output, std::size_t window,
                          std::size_t stride) {
  const std::size_t n_batch = input_shape[0], channels = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t ho = pool_extent(h, window, stride), wo = pool_extent(w, window, stride);
  if (grad_output.shape() != Shape{n_batch, channels, ho, wo})
    throw ConfigError("avgpool2d_backward: grad shape " + shape_string(grad_output.shape()));
  Tensor g(input_shape);
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t p = 0; p < n_batch * channels; ++p) {
    const double* gy = grad_output.data() + p * ho * wo;
    double* gx = g.data() + p * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double v = gy[oy * wo + ox] * inv;
        for (std::size_t ky = 0; ky < window; ++ky)
          for (std::size_t kx = 0; kx < window; ++kx) gx[(oy * stride + ky) * w + ox * stride + kx] += v;
      }
  }
  return g;
}

Tensor concat_channels(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw ConfigError("concat_channels: no inputs");
  const Tensor& first = inputs.front();
  require_rank(first, 4, "concat_channels input");
  std::size_t total = 0;
  for (const Tensor& t : inputs) {
    if (t.rank() != 4 || t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3))
      throw ConfigError("concat_channels: " + shape_string(t.shape()) + " incompatible with " +
                        shape_string(first.shape()));
    total += t.dim(1);
  }
  const std::size_t n_batch = first.dim(0), plane = first.dim(2) * first.dim(3);
  Tensor out({n_batch, total, first.dim(2), first.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n) {
    double* dst = out.data() + n * total * plane;
    for (const Tensor& t : inputs) {
      const std::size_t block = t.dim(1) * plane;
      std::copy_n(t.data() + n * block, block, dst);
      dst += block;
    }
  }
  return out;
}

Tensor channel_slice(const Tensor& input, std::size_t begin, std::size_t end) {
  require_rank(input, 4, "channel_slice input");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (begin > end || end > channels)
    throw ConfigError("channel_slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") outside " + std::to_string(channels) + " channels");
  Tensor out({n_batch, end - begin, input.dim(2), input.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n)
    std::copy_n(input.data() + (n * channels + begin) * plane, (end - begin) * plane,
                out.data() + n * (end - begin) * plane);
  return out;
}

void add_channel_slice(Tensor& dst, const Tensor& src, std::size_t begin) {
  require_rank(dst, 4, "add_channel_slice dst");
  require_rank(src, 4, "add_channel_slice src");
  const std::size_t n_batch = dst.dim(0), channels = dst.dim(1), plane = dst.dim(2) * dst.dim(3);
  const std::size_t width = src.dim(1);
  if (src.dim(0) != n_batch || src.dim(2) * src.dim(3) != plane || begin + width > channels)
    throw ConfigError("add_channel_slice: " + shape_string(src.shape()) + " at channel " + std::to_string(begin) +
                      " does not fit " + shape_string(dst.shape()));
  for (std::size_t n = 0; n < n_batch; ++n) {
    double* d = dst.data() + (n * channels + begin) * plane;
    const double* s = src.data() + n * width * plane;
    for (std::size_t i = 0; i < width * plane; ++i) d[i] += s[i];
  }
}

std::vector<Tensor> split_channels(const Tensor& input, std::span<const std::size_t> widths) {
  std::vector<Tensor> parts;
  parts.reserve(widths.size());
  std::size_t begin = 0;
  for (std::size_t width : widths) {
    parts.push_back(channel_slice(input, begin, begin + width));
    begin += width;
  }
  if (begin != input.dim(1))
    throw ConfigError("split_channels: widths sum to " + std::to_string(begin) + " but input has " +
                      std::to_string(input.dim(1)) + " channels");
  return parts;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t n_batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != n_batch)
    throw DataError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n_batch) + " samples");
  CrossEntropyResult r{std::vector<double>(n_batch), Tensor(logits.shape())};
  for (std::size_t n = 0; n < n_batch; ++n) {
    if (labels[n] >= classes)
      throw DataError("softmax_cross_entropy: sample " + std::to_string(n) + " has label " +
                      std::to_string(labels[n]) + " outside [0," + std::to_string(classes) + ")");
    const double* z = logits.data() + n * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) sum += std::exp(z[k] - zmax);
    const double log_sum = std::log(sum);
    r.losses[n] = -(z[labels[n]] - zmax - log_sum);
    double* g = r.grad_logits.data() + n * classes;
    for (std::size_t k = 0; k < classes; ++k) g[k] = std::exp(z[k] - zmax - log_sum);
    g[labels[n]] -= 1.0;
  }
  return r;
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t pad, RngStream& rng)
    : stride_(stride), pad_(pad) {
  Tensor w({out_channels, in_channels, kernel, kernel});
  const double std = std::sqrt(2.0 / static_cast<double>(in_channels * kernel * kernel));
  for (double& v : w.values()) v = rng.normal(0.0, std);
  weight_ = Parameter(std::move(name), std::move(w));
}

Tensor Conv2d::forward(const Tensor& input) {
  input_ = input;
  return conv2d(input, weight_.value, stride_, pad_);
}

Tensor Conv2d::backward(const Tensor& grad_output) {
  Conv2dGrads g = conv2d_backward(input_, weight_.value, grad_output, stride_, pad_);
  weight_.grad += g.weight;
  return std::move(g.input);
}

BatchNorm2d::BatchNorm2d(std::string name, std::size_t channels)
    : gamma_(name + ".gamma", Tensor(Shape{channels}, 1.0)),
      beta_(name + ".beta", Tensor(Shape{channels}, 0.0)),
      state_(channels) {}

Tensor BatchNorm2d::forward(const Tensor& input, Mode mode) {
  return batchnorm(input, gamma_.value, beta_.value, state_, mode, &cache_);
}

Tensor BatchNorm2d::backward(const Tensor& grad_output) {
  BatchNormGrads g = batchnorm_backward(cache_, gamma_.value, grad_output);
  gamma_.grad += g.gamma;
  beta_.grad += g.beta;
  return std::move(g.input);
}

Linear::Linear(std::string name, std::size_t in_features, std::size_t out_features, double init_std,
               RngStream& rng) {
  Tensor w({out_features, in_features});
  for (double& v : w.values()) v = rng.normal(0.0, init_std);
  weight_ = Parameter(name + ".weight", std::move(w));
  bias_ = Parameter(name + ".bias", Tensor(Shape{out_features}, 0.0));
}

Tensor Linear::forward(const Tensor& input) {
  input_ = input;
  return linear(input, weight_.value, bias_.value);
}

Tensor Linear::backward(const Tensor& grad_output) {
  LinearGrads g = linear_backward(input_, weight_.value, grad_output);
  weight_.grad += g.weight;
  bias_.grad += g.bias;
  return std::move(g.input);
}

}  // namespace densemble
