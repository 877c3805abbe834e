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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <numeric>
#include <sstream>

#include "densemble/commands.hpp"
#include "densemble/errors.hpp"
#include "densemble/experiment.hpp"
#include "densemble/grad_check.hpp"

namespace py = pybind11;
using namespace densemble;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(double));
  return out;
}

FeatureMatrix to_features(const F32Array& values, const std::vector<std::uint32_t>& ids,
                          const std::vector<std::uint16_t>& cams) {
  if (values.ndim() != 2) throw DataError("features must be a 2-D array");
  FeatureMatrix f;
  f.rows = static_cast<std::size_t>(values.shape(0));
  f.dim = static_cast<std::size_t>(values.shape(1));
  f.values.assign(values.data(), values.data() + values.size());
  f.ids = ids;
  f.cams = cams;
  f.validate();
  return f;
}

py::dict partition(const std::vector<ReidImage>& images) {
  py::dict d;
  if (images.empty()) return d;
  const Shape& s = images.front().image.shape();
  py::array_t<double> arr({static_cast<py::ssize_t>(images.size()), static_cast<py::ssize_t>(s[0]),
                           static_cast<py::ssize_t>(s[1]), static_cast<py::ssize_t>(s[2])});
  std::vector<std::size_t> ids, cams;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::memcpy(arr.mutable_data() + i * images[i].image.size(), images[i].image.data(),
                images[i].image.size() * sizeof(double));
    ids.push_back(images[i].id);
    cams.push_back(images[i].cam);
  }
  d["images"] = arr;
  d["ids"] = ids;
  d["cams"] = cams;
  return d;
}

py::dict curve_dict(const CmcCurve& c) {
  py::dict d;
  d["cmc"] = c.match_rate;
  d["mAP"] = c.mean_ap;
  d["scored"] = c.scored;
  d["skipped"] = c.skipped;
  return d;
}

}  // namespace

PYBIND11_MODULE(_densemble, m) {
  m.doc() = "Shared-backbone ensemble embeddings, retrieval metrics and cost analysis";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("version", &tool_version);

  m.def(
      "count_flops",
      [](const std::string& profile, const std::string& heads, bool baseline) {
        FlopsOptions o;
        o.profile = profile;
        o.heads = heads;
        o.baseline = baseline;
        std::ostringstream sink;
        const FlopReport r = cmd_flops(o, sink);
        py::dict d;
        d["shared_macs"] = r.shared_macs;
        d["head_macs"] = r.head_macs;
        d["total_macs"] = r.total_macs;
        d["shared_fraction"] = r.shared_fraction;
        return d;
      },
      py::arg("profile") = "densenet121-full", py::arg("heads") = "all", py::arg("baseline") = false,
      "Multiply-accumulates per image for a named profile.");

  m.def(
      "generate_synthetic",
      [](std::size_t n_train_ids, std::size_t n_test_ids, std::size_t views_per_id, std::size_t n_cams,
         std::size_t height, std::size_t width, std::uint64_t seed) {
        SyntheticSpec s{n_train_ids, n_test_ids, views_per_id, n_cams, height, width, seed};
        const ReidDataset ds = generate_synthetic(s);
        py::dict d;
        d["train"] = partition(ds.train);
        d["query"] = partition(ds.query);
        d["gallery"] = partition(ds.gallery);
        return d;
      },
      py::arg("n_train_ids") = 20, py::arg("n_test_ids") = 10, py::arg("views_per_id") = 8, py::arg("n_cams") = 2,
      py::arg("height") = 64, py::arg("width") = 32, py::arg("seed") = 1,
      "Synthetic identities as dicts of images [N,3,H,W], ids and cams per partition.");

  m.def(
      "quantize",
      [](const F32Array& values) {
        const std::vector<std::uint32_t> ids(static_cast<std::size_t>(values.shape(0)), 1);
        const std::vector<std::uint16_t> cams(ids.size(), 1);
        const BinaryCodeMatrix c = quantize(to_features(values, ids, cams));
        py::array_t<std::uint64_t> out({static_cast<py::ssize_t>(c.rows), static_cast<py::ssize_t>(c.words_per_row)});
        std::memcpy(out.mutable_data(), c.words.data(), c.words.size() * sizeof(std::uint64_t));
        return out;
      },
      py::arg("features"), "Sign codes packed 64 per word, bit b of a row in word b/64 at position b%64.");

  m.def(
      "evaluate",
      [](const F32Array& query, const std::vector<std::uint32_t>& query_ids,
         const std::vector<std::uint16_t>& query_cams, const F32Array& gallery,
         const std::vector<std::uint32_t>& gallery_ids, const std::vector<std::uint16_t>& gallery_cams,
         const std::string& metric, std::size_t max_rank) {
        const FeatureMatrix q = to_features(query, query_ids, query_cams);
        const FeatureMatrix g = to_features(gallery, gallery_ids, gallery_cams);
        return curve_dict(evaluate(rank_gallery(q, g, parse_metric(metric)), max_rank));
      },
      py::arg("query"), py::arg("query_ids"), py::arg("query_cams"), py::arg("gallery"), py::arg("gallery_ids"),
      py::arg("gallery_cams"), py::arg("metric") = "euclidean", py::arg("max_rank") = 20,
      "CMC and mAP with same-id same-camera gallery entries masked.");

  m.def(
      "grad_check",
      [](const std::string& kind, std::uint64_t seed) {
        const GradCheckReport r = check_primitive(kind, seed);
        py::dict d;
        d["max_rel_error"] = r.max_rel_error;
        d["coords"] = r.coords;
        d["kink_skipped"] = r.kink_skipped;
        d["detail"] = r.detail;
        return d;
      },
      py::arg("kind"), py::arg("seed") = 0, "Finite-difference check of one layer primitive.");
  m.def("primitive_kinds", &primitive_kinds);

  m.def(
      "parse_config",
      [](const std::string& text) { return experiment_config_from_text(text).to_text(); }, py::arg("text"),
      "Resolved form of an experiment config.");

  py::class_<EnsembleModel>(m, "EnsembleModel")
      .def(py::init([](const std::string& model_text, std::uint64_t seed) {
             return EnsembleModel(parse_model_config_text(model_text), seed);
           }),
           py::arg("config") = std::string(), py::arg("seed") = 1,
           "[backbone] / [ensemble] config text on top of the mini model.")
      .def_static("load", &EnsembleModel::load, py::arg("path"))
      .def("save", &EnsembleModel::save, py::arg("path"))
      .def_property_readonly("num_heads", [](const EnsembleModel& m) { return m.config().num_heads(); })
      .def_property_readonly("embedding_dim", [](const EnsembleModel& m) { return m.config().embedding_dim; })
      .def_property_readonly("config", [](const EnsembleModel& m) { return model_config_text(m.config()); })
      .def(
          "embed",
          [](EnsembleModel& m, const F64Array& images, std::vector<std::size_t> heads) {
            if (heads.empty()) {
              heads.resize(m.config().num_heads());
              std::iota(heads.begin(), heads.end(), std::size_t{0});
            }
            const Tensor x = to_tensor(images);
            py::gil_scoped_release release;
            const Tensor e = m.embed(x, heads);
            py::gil_scoped_acquire acquire;
            return to_numpy(e);
          },
          py::arg("images"), py::arg("heads") = std::vector<std::size_t>{},
          "Eval-mode embeddings [N, len(heads)*H] of images [N,C,H,W].")
      .def(
          "loss",
          [](EnsembleModel& m, const F64Array& images, const std::vector<std::size_t>& labels) {
            const auto outs = m.forward(to_tensor(images), Mode::Eval);
            const EnsembleLoss l = ensemble_loss(outs, labels);
            py::dict d;
            d["total"] = l.total;
            d["per_head"] = l.per_head;
            return d;
          },
          py::arg("images"), py::arg("labels"), "Joint cross-entropy of every head in eval mode.");

  m.def(
      "run_experiment",
      [](const std::string& config_text) {
        const ExperimentConfig cfg = experiment_config_from_text(config_text);
        RunOutcome run;
        {
          py::gil_scoped_release release;
          run = run_experiment(cfg, prepare_dataset(cfg.data));
        }
        py::dict d;
        std::vector<double> losses, singles, cumulative;
        for (const EpochRecord& r : run.log.epochs) losses.push_back(r.total_loss);
        for (const CmcCurve& c : run.euclidean.single) singles.push_back(c.mean_ap);
        for (const CmcCurve& c : run.euclidean.cumulative) cumulative.push_back(c.mean_ap);
        d["loss"] = losses;
        d["mAP"] = run.euclidean.full.mean_ap;
        d["single_mAP"] = singles;
        d["cumulative_mAP"] = cumulative;
        d["hamming_mAP"] = run.hamming.mean_ap;
        return d;
      },
      py::arg("config") = std::string(), "Train on the configured data, then score every head.");
}
