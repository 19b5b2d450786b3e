// Copyright 2026 The idexpo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
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
#include <stdexcept>
#include <string>
#include <vector>

#include "idexpo/dataset.hpp"
#include "idexpo/explain.hpp"
#include "idexpo/metrics.hpp"
#include "idexpo/mlp.hpp"
#include "idexpo/rng.hpp"
#include "idexpo/train.hpp"

namespace py = pybind11;

namespace {

using idexpo::Tensor;

py::array_t<double> tensor_to_array(const Tensor& t) {
  py::array_t<double> a({t.rows(), t.cols()});
  std::memcpy(a.mutable_data(), t.data(), sizeof(double) * t.size());
  return a;
}

py::array_t<double> vector_to_array(const std::vector<double>& v) {
  py::array_t<double> a(py::ssize_t(v.size()));
  std::memcpy(a.mutable_data(), v.data(), sizeof(double) * v.size());
  return a;
}

// Accepts 1-d (treated as a single row) or 2-d arrays.
Tensor array_to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 1) {
    Tensor t(1, int(a.shape(0)));
    std::memcpy(t.data(), a.data(), sizeof(double) * t.size());
    return t;
  }
  if (a.ndim() == 2) {
    Tensor t(int(a.shape(0)), int(a.shape(1)));
    std::memcpy(t.data(), a.data(), sizeof(double) * t.size());
    return t;
  }
  throw std::invalid_argument("expected a 1-d or 2-d float array");
}

idexpo::ExplainConfig explain_config(const std::string& explainer, int samples, double epsilon) {
  idexpo::ExplainConfig cfg;
  cfg.kind = idexpo::explainer_kind_from_string(explainer);
  cfg.num_samples = samples;
  cfg.epsilon = epsilon;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_idexpo, m) {
  m.doc() =
      "Fine-tuning of differentiable classifiers so that post-hoc explainers "
      "score well on insertion and deletion faithfulness metrics.";

  py::register_exception<idexpo::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<idexpo::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<idexpo::IngestError>(m, "IngestError", PyExc_ValueError);

  py::class_<idexpo::Dataset>(m, "Dataset")
      .def_readonly("name", &idexpo::Dataset::name)
      .def_readonly("feature_names", &idexpo::Dataset::feature_names)
      .def_readonly("y", &idexpo::Dataset::y)
      .def_readonly("num_classes", &idexpo::Dataset::num_classes)
      .def_readonly("original_labels", &idexpo::Dataset::original_labels)
      .def_readonly("hash", &idexpo::Dataset::hash)
      .def_property_readonly("x",
                             [](const idexpo::Dataset& ds) { return tensor_to_array(ds.x); })
      .def_property_readonly("num_samples", &idexpo::Dataset::num_samples)
      .def_property_readonly("num_features", &idexpo::Dataset::num_features)
      .def("__repr__", [](const idexpo::Dataset& ds) {
        return "<Dataset '" + ds.name + "' " + std::to_string(ds.num_samples()) + "x" +
               std::to_string(ds.num_features()) + ", " + std::to_string(ds.num_classes) +
               " classes>";
      });

  py::class_<idexpo::SplitSpec>(m, "SplitSpec")
      .def_readonly("train", &idexpo::SplitSpec::train)
      .def_readonly("val", &idexpo::SplitSpec::val)
      .def_readonly("test", &idexpo::SplitSpec::test);

  py::class_<idexpo::Standardizer>(m, "Standardizer")
      .def_readonly("mean", &idexpo::Standardizer::mean)
      .def_readonly("stdev", &idexpo::Standardizer::stdev)
      .def_readonly("kept", &idexpo::Standardizer::kept)
      .def_readonly("dropped", &idexpo::Standardizer::dropped)
      .def("transform",
           [](const idexpo::Standardizer& s,
              const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
             return tensor_to_array(s.transform(array_to_tensor(x)));
           })
      .def("inverse",
           [](const idexpo::Standardizer& s,
              const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
             return tensor_to_array(s.inverse(array_to_tensor(x)));
           });

  py::class_<idexpo::MlpModel>(m, "Model")
      .def_readonly("dims", &idexpo::MlpModel::dims)
      .def_readonly("data_hash", &idexpo::MlpModel::data_hash)
      .def_property_readonly("num_classes", &idexpo::MlpModel::num_classes)
      .def_property_readonly("input_dim", &idexpo::MlpModel::input_dim)
      .def("predict_proba",
           [](const idexpo::MlpModel& mdl,
              const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
             return tensor_to_array(idexpo::predict_proba(mdl, array_to_tensor(x)));
           })
      .def("predict_label",
           [](const idexpo::MlpModel& mdl, const std::vector<double>& x) {
             return idexpo::predict_label(mdl, x);
           })
      .def("to_json", [](const idexpo::MlpModel& mdl) { return idexpo::model_to_json(mdl); })
      .def_static("from_json",
                  [](const std::string& text) { return idexpo::model_from_json(text); })
      .def("save", [](const idexpo::MlpModel& mdl, const std::string& path) {
        idexpo::save_model(mdl, path);
      })
      .def_static("load", [](const std::string& path) { return idexpo::load_model(path); })
      .def("__repr__", [](const idexpo::MlpModel& mdl) {
        std::string s = "<Model dims=[";
        for (size_t i = 0; i < mdl.dims.size(); ++i) {
          if (i) s += ", ";
          s += std::to_string(mdl.dims[i]);
        }
        return s + "]>";
      });

  py::class_<idexpo::EpochStats>(m, "EpochStats")
      .def_readonly("accuracy", &idexpo::EpochStats::accuracy)
      .def_readonly("insertion", &idexpo::EpochStats::insertion)
      .def_readonly("deletion", &idexpo::EpochStats::deletion)
      .def_readonly("score", &idexpo::EpochStats::score);

  py::class_<idexpo::MetricReport>(m, "MetricReport")
      .def_readonly("accuracy", &idexpo::MetricReport::accuracy)
      .def_readonly("insertion", &idexpo::MetricReport::insertion)
      .def_readonly("deletion", &idexpo::MetricReport::deletion)
      .def_readonly("score", &idexpo::MetricReport::score)
      .def_readonly("eta", &idexpo::MetricReport::eta)
      .def_readonly("sensitivity", &idexpo::MetricReport::sensitivity)
      .def_readonly("has_sensitivity", &idexpo::MetricReport::has_sensitivity)
      .def_readonly("degenerate_sensitivity", &idexpo::MetricReport::degenerate_sensitivity)
      .def_readonly("insertion_curve", &idexpo::MetricReport::insertion_curve)
      .def_readonly("deletion_curve", &idexpo::MetricReport::deletion_curve)
      .def_readonly("s_max", &idexpo::MetricReport::s_max)
      .def_readonly("num_samples", &idexpo::MetricReport::num_samples);

  py::class_<idexpo::PretrainResult>(m, "PretrainResult")
      .def_readonly("model", &idexpo::PretrainResult::model)
      .def_readonly("val_accuracy", &idexpo::PretrainResult::val_accuracy)
      .def_readonly("best_epoch", &idexpo::PretrainResult::best_epoch)
      .def_readonly("best_val_accuracy", &idexpo::PretrainResult::best_val_accuracy);

  py::class_<idexpo::TrainResult>(m, "TrainResult")
      .def_readonly("model", &idexpo::TrainResult::model)
      .def_readonly("epochs", &idexpo::TrainResult::epochs)
      .def_readonly("best_epoch", &idexpo::TrainResult::best_epoch)
      .def_readonly("val_at_best", &idexpo::TrainResult::val_at_best)
      .def_readonly("failed", &idexpo::TrainResult::failed)
      .def_readonly("failure", &idexpo::TrainResult::failure)
      .def_property_readonly("test", [](const idexpo::TrainResult& r) -> py::object {
        if (!r.has_test) return py::none();
        return py::cast(r.test);
      });

  m.def("make_synthetic", &idexpo::make_synthetic_classification, py::arg("name"),
        py::arg("n"), py::arg("q"), py::arg("classes"), py::arg("seed"),
        "Deterministic synthetic classification dataset from a seeded teacher network.");
  m.def("load_csv", &idexpo::load_csv, py::arg("path"));
  m.def("save_csv", &idexpo::save_csv, py::arg("dataset"), py::arg("path"));
  m.def(
      "make_splits",
      [](const idexpo::Dataset& ds, uint64_t seed) { return idexpo::make_splits(ds, seed); },
      py::arg("dataset"), py::arg("seed"),
      "Five deterministic 60/20/20 train/val/test splits.");
  m.def(
      "standardize",
      [](const idexpo::Dataset& ds, const idexpo::SplitSpec& split) {
        return idexpo::standardize(ds, split);
      },
      py::arg("dataset"), py::arg("split"),
      "Returns (standardized dataset, fitted standardizer); statistics come from the "
      "train rows only.");
  m.def(
      "background",
      [](const idexpo::Dataset& ds, const idexpo::SplitSpec& split) {
        return idexpo::background(ds, split);
      },
      py::arg("dataset"), py::arg("split"),
      "Per-feature train-split means used as the masking baseline.");

  m.def(
      "pretrain",
      [](const idexpo::Dataset& ds, const idexpo::SplitSpec& split, double lr, int batch_size,
         int max_epochs, int patience, uint64_t seed) {
        idexpo::PretrainConfig cfg;
        cfg.sgd.lr = lr;
        cfg.batch_size = batch_size;
        cfg.max_epochs = max_epochs;
        cfg.patience = patience;
        return idexpo::pretrain(ds, split, cfg, seed);
      },
      py::arg("dataset"), py::arg("split"), py::arg("lr") = 0.01, py::arg("batch_size") = 128,
      py::arg("max_epochs") = 200, py::arg("patience") = 20, py::arg("seed") = 0,
      "Cross-entropy pretraining with early stopping on validation accuracy.");

  m.def(
      "finetune",
      [](const idexpo::MlpModel& base, const idexpo::Dataset& ds,
         const idexpo::SplitSpec& split, const std::vector<double>& bg,
         const std::string& method, const std::string& explainer, const std::string& deletion,
         double lambda12, double lambda3, double expo_weight, double lr, int batch_size,
         int max_epochs, int patience, int samples, double epsilon, double s_fraction,
         double eta, uint64_t seed) {
        idexpo::TrainConfig cfg;
        cfg.method = idexpo::method_from_string(method);
        cfg.explainer = explain_config(explainer, samples, epsilon);
        cfg.deletion = idexpo::deletion_variant_from_string(deletion);
        cfg.lambda12 = lambda12;
        cfg.lambda3 = lambda3;
        cfg.expo_weight = expo_weight;
        cfg.sgd.lr = lr;
        cfg.batch_size = batch_size;
        cfg.max_epochs = max_epochs;
        cfg.patience = patience;
        cfg.s_fraction = s_fraction;
        cfg.eta = eta;
        return idexpo::finetune(base, ds, split, bg, cfg, seed);
      },
      py::arg("model"), py::arg("dataset"), py::arg("split"), py::arg("background"),
      py::arg("method") = "idexpo", py::arg("explainer") = "lime", py::arg("deletion") = "a",
      py::arg("lambda12") = 0.1, py::arg("lambda3") = 0.001, py::arg("expo_weight") = 0.01,
      py::arg("lr") = 0.001, py::arg("batch_size") = 128, py::arg("max_epochs") = 200,
      py::arg("patience") = 20, py::arg("samples") = 200, py::arg("epsilon") = 0.01,
      py::arg("s_fraction") = 0.5, py::arg("eta") = 2.0, py::arg("seed") = 0,
      "Fine-tunes a pretrained model with the chosen objective; early stopping on the "
      "validation selection score.");

  m.def(
      "evaluate",
      [](const idexpo::MlpModel& model, const idexpo::Dataset& ds, const std::vector<int>& rows,
         const std::vector<double>& bg, const std::string& explainer, int samples,
         double epsilon, double s_fraction, double eta, bool sensitivity,
         int sensitivity_subsets, double sensitivity_fraction, uint64_t seed) {
        idexpo::EvalConfig cfg;
        cfg.explainer = explain_config(explainer, samples, epsilon);
        cfg.s_fraction = s_fraction;
        cfg.eta = eta;
        cfg.with_sensitivity = sensitivity;
        cfg.sensitivity_subsets = sensitivity_subsets;
        cfg.sensitivity_fraction = sensitivity_fraction;
        return idexpo::evaluate_model(model, ds, rows, bg, cfg, seed);
      },
      py::arg("model"), py::arg("dataset"), py::arg("rows"), py::arg("background"),
      py::arg("explainer") = "lime", py::arg("samples") = 200, py::arg("epsilon") = 0.01,
      py::arg("s_fraction") = 0.5, py::arg("eta") = 2.0, py::arg("sensitivity") = false,
      py::arg("sensitivity_subsets") = 100, py::arg("sensitivity_fraction") = 0.25,
      py::arg("seed") = 0,
      "Accuracy, hard insertion/deletion, selection score and optional sensitivity "
      "correlation over the given rows; explanations target the predicted label.");

  m.def(
      "explain",
      [](const idexpo::MlpModel& model,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x_row,
         const std::vector<double>& bg, int label, const std::string& explainer, int samples,
         double epsilon, uint64_t seed) {
        Tensor x = array_to_tensor(x_row);
        if (x.rows() != 1) throw idexpo::ShapeError("explain: expected a single row");
        int target = label >= 0 ? label : idexpo::predict_label(model, x.row_vector(0));
        idexpo::SeedStream rng(seed, idexpo::streams::kEvalPerturb, {0});
        Tensor phi =
            idexpo::explain(model, x, bg, target, explain_config(explainer, samples, epsilon), rng);
        return vector_to_array(phi.row_vector(0));
      },
      py::arg("model"), py::arg("x_row"), py::arg("background"), py::arg("label") = -1,
      py::arg("explainer") = "lime", py::arg("samples") = 200, py::arg("epsilon") = 0.01,
      py::arg("seed") = 0,
      "Feature attribution for one standardized row; label -1 explains the prediction.");

  m.def(
      "hard_insertion",
      [](const idexpo::MlpModel& model,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x_row,
         const std::vector<double>& phi, const std::vector<double>& bg, int s_max, int label) {
        return idexpo::hard_insertion(model, array_to_tensor(x_row), phi, bg, s_max, label);
      },
      py::arg("model"), py::arg("x_row"), py::arg("phi"), py::arg("background"),
      py::arg("s_max"), py::arg("label"));
  m.def(
      "hard_deletion",
      [](const idexpo::MlpModel& model,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x_row,
         const std::vector<double>& phi, const std::vector<double>& bg, int s_max, int label) {
        return idexpo::hard_deletion(model, array_to_tensor(x_row), phi, bg, s_max, label);
      },
      py::arg("model"), py::arg("x_row"), py::arg("phi"), py::arg("background"),
      py::arg("s_max"), py::arg("label"));
  m.def("valscore", &idexpo::valscore, py::arg("accuracy"), py::arg("insertion"),
        py::arg("deletion"), py::arg("eta"));

  m.attr("__version__") = "0.1.0";
}
