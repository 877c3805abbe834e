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

#include "densemble/dataio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include "densemble/errors.hpp"
#include "densemble/rng.hpp"

namespace fs = std::filesystem;

namespace densemble {

void ReidDataset::validate() const {
  std::set<std::size_t> train_ids, gallery_ids;
  for (const auto& im : train) train_ids.insert(im.id);
  for (const auto& im : gallery) gallery_ids.insert(im.id);
  for (const auto& im : query) {
    if (train_ids.count(im.id)) throw DataError("id " + std::to_string(im.id) + " appears in train and query");
    if (!gallery_ids.count(im.id)) throw DataError("query id " + std::to_string(im.id) + " missing from gallery");
  }
  for (std::size_t id : gallery_ids)
    if (id != 0 && train_ids.count(id))
      throw DataError("id " + std::to_string(id) + " appears in train and gallery");
  for (const auto& q : query) {
    const bool matched = std::any_of(gallery.begin(), gallery.end(),
                                     [&](const ReidImage& g) { return g.id == q.id && g.cam != q.cam; });
    if (!matched)
      throw DataError("query " + format_image_name(q.id, q.cam, q.index) + " has no cross-camera gallery match");
  }
}

// ---------------------------------------------------------------------------
// Synthetic identities

namespace {

using Rgb = std::array<double, 3>;

struct Patch {
  double y0, x0, h, w;
  Rgb color;
};

struct Identity {
  Rgb skin, hair, upper, lower, shoes;
  bool stripes_on_upper;
  bool vertical_stripes;
  double stripe_period;  // pixels at 64-pixel height
  double stripe_phase;
  double stripe_amplitude;
  std::vector<Patch> patches;
  double torso_width;  // fraction of image width
};

Rgb random_color(RngStream& rng) { return {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)}; }

Identity make_identity(std::uint64_t seed, std::size_t id) {
  RngStream rng(derive_seed(seed, 0x1D, id));
  Identity p;
  const double tone = rng.uniform(0.35, 0.85);
  p.skin = {tone, tone * 0.8, tone * 0.65};
  p.hair = {rng.uniform(0.0, 0.4), rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.2)};
  p.upper = random_color(rng);
  p.lower = random_color(rng);
  p.shoes = {rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3)};
  p.stripes_on_upper = rng.bernoulli(0.7);
  p.vertical_stripes = rng.bernoulli(0.5);
  p.stripe_period = rng.uniform(3.0, 9.0);
  p.stripe_phase = rng.uniform(0.0, 1.0);
  p.stripe_amplitude = rng.uniform(0.08, 0.3);
  p.torso_width = rng.uniform(0.45, 0.65);
  const std::size_t n_patches = 2 + rng.below(3);
  for (std::size_t i = 0; i < n_patches; ++i) {
    Patch patch;
    patch.y0 = rng.uniform(0.2, 0.85);
    patch.x0 = rng.uniform(0.25, 0.65);
    patch.h = rng.uniform(0.05, 0.14);
    patch.w = rng.uniform(0.1, 0.3);
    patch.color = random_color(rng);
    p.patches.push_back(patch);
  }
  return p;
}

struct CameraCast {
  Rgb gain;
  Rgb offset;
};

CameraCast make_camera(std::uint64_t seed, std::size_t cam) {
  RngStream rng(derive_seed(seed, 0xCA, cam));
  CameraCast c;
  for (int ch = 0; ch < 3; ++ch) {
    c.gain[ch] = rng.uniform(0.85, 1.15);
    c.offset[ch] = rng.uniform(-0.05, 0.05);
  }
  return c;
}

// One view: silhouette of head / torso / legs on a noisy background.
Tensor render_view(const Identity& person, const CameraCast& cam, std::size_t h, std::size_t w, RngStream& rng) {
  const double brightness = rng.uniform(0.8, 1.2);
  const double shift = rng.uniform(-0.1, 0.1) * static_cast<double>(w);
  const double bg_level = rng.uniform(0.25, 0.75);
  const Rgb bg_tint = {rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)};
  const double bg_slope = rng.uniform(-0.2, 0.2);

  Tensor img({3, h, w});
  const double fh = static_cast<double>(h), fw = static_cast<double>(w);
  const double cx = 0.5 * fw + shift;
  for (std::size_t y = 0; y < h; ++y) {
    const double v = (static_cast<double>(y) + 0.5) / fh;
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double u = (px - cx) / fw;  // horizontal offset from body centre, in widths
      const double ub = u + 0.5;        // body-relative horizontal coordinate
      Rgb color;
      bool body = false;
      const double half_torso = 0.5 * person.torso_width;
      if (v < 0.07 && std::abs(u) < 0.13) {
        color = person.hair, body = true;
      } else if (v < 0.19 && (u * u) / (0.15 * 0.15) + ((v - 0.13) * (v - 0.13)) / (0.07 * 0.07) < 1.0) {
        color = person.skin, body = true;
      } else if (v >= 0.19 && v < 0.56 && std::abs(u) < half_torso) {
        color = person.upper, body = true;
        if (person.stripes_on_upper) {
          const double coord = person.vertical_stripes ? px - cx : static_cast<double>(y) * 64.0 / fh;
          const double s = std::sin(2.0 * M_PI * (coord / person.stripe_period + person.stripe_phase));
          for (double& ch : color) ch += person.stripe_amplitude * (s > 0 ? 1.0 : -1.0) * 0.5;
        }
      } else if (v >= 0.56 && v < 0.92 && std::abs(u) < 0.2 && std::abs(u) > 0.02) {
        color = person.lower, body = true;
        if (!person.stripes_on_upper) {
          const double coord = person.vertical_stripes ? px - cx : static_cast<double>(y) * 64.0 / fh;
          const double s = std::sin(2.0 * M_PI * (coord / person.stripe_period + person.stripe_phase));
          for (double& ch : color) ch += person.stripe_amplitude * (s > 0 ? 1.0 : -1.0) * 0.5;
        }
      } else if (v >= 0.92 && v < 0.98 && std::abs(u) < 0.22 && std::abs(u) > 0.01) {
        color = person.shoes, body = true;
      }
      if (body) {
        for (const Patch& p : person.patches)
          if (v >= p.y0 && v < p.y0 + p.h && ub >= p.x0 && ub < p.x0 + p.w &&
              ((v >= 0.19 && v < 0.56 && std::abs(u) < half_torso) || (v >= 0.56 && v < 0.92 && std::abs(u) < 0.2)))
            color = p.color;
      } else {
        const double g = bg_level + bg_slope * (v - 0.5);
        color = {g + bg_tint[0], g + bg_tint[1], g + bg_tint[2]};
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double val = color[ch] * brightness;
        val = val * cam.gain[ch] + cam.offset[ch];
        val += rng.normal(0.0, 0.05);
        val = std::clamp(val, 0.0, 1.0);
        img[(ch * h + y) * w + x] = std::round(val * 255.0) / 255.0;
      }
    }
  }
  return img;
}

}  // namespace

ReidDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_cams < 2) throw ConfigError("synthetic data needs n_cams >= 2");
  if (spec.views_per_id < 2 * spec.n_cams)
    throw ConfigError("synthetic data needs views_per_id >= 2*n_cams so every camera keeps a gallery view (got " +
                      std::to_string(spec.views_per_id) + " views, " + std::to_string(spec.n_cams) + " cams)");
  if (spec.n_train_ids < 2) throw ConfigError("synthetic data needs at least 2 train ids");
  if (spec.n_test_ids < 1) throw ConfigError("synthetic data needs at least 1 test id");
  if (spec.height < 8 || spec.width < 8) throw ConfigError("synthetic images must be at least 8x8");

  std::vector<CameraCast> cams;
  for (std::size_t c = 1; c <= spec.n_cams; ++c) cams.push_back(make_camera(spec.seed, c));

  ReidDataset ds;
  const std::size_t total_ids = spec.n_train_ids + spec.n_test_ids;
  for (std::size_t id = 1; id <= total_ids; ++id) {
    const Identity person = make_identity(spec.seed, id);
    const bool is_train = id <= spec.n_train_ids;
    for (std::size_t v = 0; v < spec.views_per_id; ++v) {
      const std::size_t cam = v % spec.n_cams + 1;
      RngStream rng(derive_seed(spec.seed, id, v + 1));
      ReidImage im{render_view(person, cams[cam - 1], spec.height, spec.width, rng), id, cam, v};
      if (is_train)
        ds.train.push_back(std::move(im));
      else if (v < spec.n_cams)
        ds.query.push_back(std::move(im));
      else
        ds.gallery.push_back(std::move(im));
    }
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Files

ImageName parse_image_name(const std::string& filename) {
  static const std::regex pattern(R"(^(\d+)_c(\d+)_(\d+)\.ppm$)");
  std::smatch m;
  if (!std::regex_match(filename, m, pattern))
    throw DataError("malformed image name \"" + filename + "\" (expected <id>_c<cam>_<idx>.ppm)");
  return {std::stoul(m[1]), std::stoul(m[2]), std::stoul(m[3])};
}

std::string format_image_name(std::size_t id, std::size_t cam, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04zu_c%zu_%04zu.ppm", id, cam, index);
  return buf;
}

namespace {
// Next header token, skipping whitespace and '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}
}  // namespace

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path);
  if (ppm_token(in) != "P6") throw DataError("image " + path + " is not a binary P6 PPM");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw DataError("image " + path + " has a malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw DataError("image " + path + " has unsupported dimensions or maxval");
  std::vector<unsigned char> bytes(w * h * 3);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
    throw DataError("image " + path + " is truncated");
  Tensor img({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img[(c * h + y) * w + x] = static_cast<double>(bytes[(y * w + x) * 3 + c]) / static_cast<double>(maxval);
  return img;
}

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ConfigError("write_ppm expects a [3,H,W] image");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image " + path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> bytes(w * h * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image[(c * h + y) * w + x], 0.0, 1.0);
        bytes[(y * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing image " + path);
}

namespace {
constexpr const char* kPartitions[] = {"train", "query", "gallery"};

std::vector<ReidImage>& partition(ReidDataset& ds, int p) { return p == 0 ? ds.train : p == 1 ? ds.query : ds.gallery; }
const std::vector<ReidImage>& partition(const ReidDataset& ds, int p) {
  return p == 0 ? ds.train : p == 1 ? ds.query : ds.gallery;
}
}  // namespace

void save_dataset(const ReidDataset& dataset, const std::string& root) {
  for (int p = 0; p < 3; ++p) {
    const fs::path dir = fs::path(root) / kPartitions[p];
    fs::create_directories(dir);
    for (const ReidImage& im : partition(dataset, p))
      write_ppm((dir / format_image_name(im.id, im.cam, im.index)).string(), im.image);
  }
}

ReidDataset load_dataset(const std::string& root) {
  ReidDataset ds;
  for (int p = 0; p < 3; ++p) {
    const fs::path dir = fs::path(root) / kPartitions[p];
    if (!fs::is_directory(dir)) throw DataError("dataset partition directory " + dir.string() + " is missing");
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("dataset partition " + dir.string() + " is empty");
    for (const std::string& name : names) {
      ImageName parsed;
      try {
        parsed = parse_image_name(name);
      } catch (const DataError& e) {
        throw DataError((dir / name).string() + ": " + e.what());
      }
      partition(ds, p).push_back({read_ppm((dir / name).string()), parsed.id, parsed.cam, parsed.index});
    }
  }
  ds.validate();
  return ds;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("resize target must be positive");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image;
  Tensor out({channels, height, width});
  const double sy = height > 1 ? static_cast<double>(h - 1) / static_cast<double>(height - 1) : 0.0;
  const double sx = width > 1 ? static_cast<double>(w - 1) / static_cast<double>(width - 1) : 0.0;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) * sy;
    const auto y0 = std::min(static_cast<std::size_t>(fy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ay = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) * sx;
      const auto x0 = std::min(static_cast<std::size_t>(fx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double ax = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        const double* src = image.data() + c * h * w;
        const double top = src[y0 * w + x0] * (1.0 - ax) + src[y0 * w + x1] * ax;
        const double bottom = src[y1 * w + x0] * (1.0 - ax) + src[y1 * w + x1] * ax;
        out[(c * height + y) * width + x] = top * (1.0 - ay) + bottom * ay;
      }
    }
  }
  return out;
}

Tensor stack_images(std::span<const ReidImage> images, std::size_t height, std::size_t width) {
  if (images.empty()) throw DataError("no images to stack");
  const std::size_t channels = images.front().image.dim(0);
  Tensor out({images.size(), channels, height, width});
  const std::size_t per = channels * height * width;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& img = images[i].image;
    if (img.dim(0) != channels) throw DataError("images have inconsistent channel counts");
    const Tensor sized = (img.dim(1) == height && img.dim(2) == width) ? img : resize_bilinear(img, height, width);
    std::copy_n(sized.data(), per, out.data() + i * per);
  }
  return out;
}

TrainingSet make_training_set(std::span<const ReidImage> train, std::size_t height, std::size_t width,
                              std::map<std::size_t, std::size_t>* label_of_id) {
  std::map<std::size_t, std::size_t> labels;
  for (const ReidImage& im : train) labels.emplace(im.id, 0);
  std::size_t next = 0;
  for (auto& [id, label] : labels) label = next++;
  TrainingSet set;
  for (const ReidImage& im : train) {
    set.images.push_back((im.image.dim(1) == height && im.image.dim(2) == width)
                             ? im.image
                             : resize_bilinear(im.image, height, width));
    set.labels.push_back(labels.at(im.id));
  }
  if (label_of_id) *label_of_id = std::move(labels);
  return set;
}

}  // namespace densemble
