#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <string>
#include <vector>

#include "filterattack/classifier.hpp"
#include "filterattack/detector.hpp"
#include "filterattack/errors.hpp"
#include "filterattack/evolve.hpp"
#include "filterattack/filters.hpp"
#include "filterattack/image.hpp"
#include "filterattack/metrics.hpp"
#include "filterattack/moea.hpp"

namespace py = pybind11;
using namespace filterattack;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image image_from_array(const FloatArray& array) {
  if (array.ndim() != 3 || array.shape(2) != 3) {
    throw ArgumentError("expected an array of shape (height, width, 3)");
  }
  const float* p = array.data();
  return Image(static_cast<int>(array.shape(0)), static_cast<int>(array.shape(1)),
               std::vector<float>(p, p + array.size()));
}

py::array_t<float> image_to_array(const Image& image) {
  py::array_t<float> out({image.height(), image.width(), Image::kChannels});
  std::copy(image.data().begin(), image.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> probs_to_array(const PredictionVector& p) {
  py::array_t<double> out(kNumClasses);
  std::copy(p.probs.begin(), p.probs.end(), out.mutable_data());
  return out;
}

LabeledDataset make_dataset(std::vector<Image> images, std::vector<int> labels) {
  if (images.size() != labels.size()) throw ArgumentError("images and labels differ in length");
  LabeledDataset ds;
  ds.images = std::move(images);
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adversarial filter-chain search against a feature-squeezing detector";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ArgumentError>(m, "ArgumentError", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<DatasetError>(m, "DatasetError", error.ptr());
  py::register_exception<ModelFormatError>(m, "ModelFormatError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());

  // --- images and datasets ---------------------------------------------------
  py::class_<Image>(m, "Image")
      .def(py::init(&image_from_array), py::arg("array"))
      .def_static("filled", &Image::filled, py::arg("height"), py::arg("width"), py::arg("value"))
      .def_property_readonly("height", &Image::height)
      .def_property_readonly("width", &Image::width)
      .def("to_numpy", &image_to_array)
      .def("__eq__", [](const Image& a, const Image& b) { return a == b; })
      .def("__repr__", [](const Image& img) {
        return "<Image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) + ">";
      });

  py::class_<LabeledDataset>(m, "LabeledDataset")
      .def(py::init(&make_dataset), py::arg("images"), py::arg("labels"))
      .def_readonly("images", &LabeledDataset::images)
      .def_readonly("labels", &LabeledDataset::labels)
      .def("__len__", &LabeledDataset::size);

  m.def("load_cifar10_batch", &load_cifar10_batch, py::arg("path"));
  m.def("write_cifar10_batch", &write_cifar10_batch, py::arg("dataset"), py::arg("path"));
  m.def("split_dataset", &split_dataset, py::arg("dataset"), py::arg("n_train"));
  m.def("read_image", &read_image, py::arg("path"));
  m.def("write_image", &write_image, py::arg("image"), py::arg("path"));

  // --- filters ---------------------------------------------------------------
  py::enum_<FilterKind>(m, "FilterKind")
      .value("Clarendon", FilterKind::Clarendon)
      .value("Juno", FilterKind::Juno)
      .value("Reyes", FilterKind::Reyes)
      .value("Gingham", FilterKind::Gingham)
      .value("Lark", FilterKind::Lark);

  py::class_<FilterGene>(m, "FilterGene")
      .def(py::init(&FilterGene::make), py::arg("kind"), py::arg("alpha"), py::arg("strength"))
      .def_readonly("kind", &FilterGene::kind)
      .def_readonly("alpha", &FilterGene::alpha)
      .def_readonly("strength", &FilterGene::strength)
      .def("__eq__", [](const FilterGene& a, const FilterGene& b) { return a == b; });

  py::class_<FilterChain>(m, "FilterChain")
      .def(py::init<std::vector<FilterGene>>(), py::arg("genes"))
      .def_static("parse", &parse_chain, py::arg("text"))
      .def("serialize", &FilterChain::serialize)
      .def("parameters", &FilterChain::parameters)
      .def("with_parameters",
           [](const FilterChain& c, const std::vector<double>& p) { return c.with_parameters(p); },
           py::arg("params"))
      .def_property_readonly("genes", [](const FilterChain& c) {
        return std::vector<FilterGene>(c.genes().begin(), c.genes().end());
      })
      .def("__len__", &FilterChain::size)
      .def("__getitem__", [](const FilterChain& c, std::size_t i) {
        if (i >= c.size()) throw py::index_error();
        return c[i];
      })
      .def("__eq__", [](const FilterChain& a, const FilterChain& b) { return a == b; })
      .def("__str__", &FilterChain::serialize);

  m.def("parse_chain", &parse_chain, py::arg("text"));
  m.def("apply_filter", &apply_filter, py::arg("image"), py::arg("kind"), py::arg("alpha"));
  m.def("strength_blend", &strength_blend, py::arg("x"), py::arg("x_star"), py::arg("s"));
  m.def("apply_chain", &apply_chain, py::arg("image"), py::arg("chain"));

  // --- classifier ------------------------------------------------------------
  py::class_<Classifier>(m, "Classifier")
      .def("predict", [](const Classifier& c, const Image& img) { return probs_to_array(c.predict(img)); },
           py::arg("image"))
      .def("predict_label", &predict_label, py::arg("image"));

  py::class_<CnnModel, Classifier>(m, "CnnModel")
      .def_static("load", &CnnModel::load, py::arg("path"))
      .def_static(
          "fixture",
          [](std::uint64_t seed, bool compact) {
            return CnnModel::fixture(seed, compact ? Architecture::compact() : Architecture::standard());
          },
          py::arg("seed"), py::arg("compact") = true)
      .def_static(
          "zeros",
          [](bool compact) {
            return CnnModel::zeros(compact ? Architecture::compact() : Architecture::standard());
          },
          py::arg("compact") = true)
      .def("save", &CnnModel::save, py::arg("path"))
      .def("logits", &CnnModel::logits, py::arg("image"))
      .def_property_readonly("checksum", &CnnModel::checksum)
      .def_property_readonly("conv_widths", [](const CnnModel& c) { return c.architecture().conv_widths; })
      .def_property_readonly("dense_widths", [](const CnnModel& c) { return c.architecture().dense_widths; });

  // --- detector --------------------------------------------------------------
  m.attr("DEFAULT_THRESHOLD") = kDefaultDetectionThreshold;

  py::class_<SqueezerConfig>(m, "SqueezerConfig")
      .def(py::init<>())
      .def_readwrite("bit_depth", &SqueezerConfig::bit_depth)
      .def_readwrite("median_window", &SqueezerConfig::median_window)
      .def_readwrite("nlm_search", &SqueezerConfig::nlm_search)
      .def_readwrite("nlm_patch", &SqueezerConfig::nlm_patch)
      .def_readwrite("nlm_strength", &SqueezerConfig::nlm_strength)
      .def_readwrite("nlm_sigma", &SqueezerConfig::nlm_sigma)
      .def("validate", &SqueezerConfig::validate);

  py::class_<DetectorVerdict>(m, "DetectorVerdict")
      .def_readonly("score", &DetectorVerdict::score)
      .def_readonly("flagged", &DetectorVerdict::flagged)
      .def_readonly("threshold", &DetectorVerdict::threshold);

  m.def("squeeze_bit_depth", &squeeze_bit_depth, py::arg("image"), py::arg("bits"));
  m.def("squeeze_median", &squeeze_median, py::arg("image"), py::arg("window"));
  m.def("squeeze_nlm", &squeeze_nlm, py::arg("image"), py::arg("config") = SqueezerConfig{});
  m.def(
      "detect",
      [](const Classifier& c, const Image& img, const SqueezerConfig& cfg, double threshold) {
        return detect(c, img, cfg, threshold);
      },
      py::arg("classifier"), py::arg("image"), py::arg("config") = SqueezerConfig{},
      py::arg("threshold") = kDefaultDetectionThreshold);

  // --- multi-objective selection ---------------------------------------------
  py::class_<ObjectiveVector>(m, "ObjectiveVector")
      .def(py::init<double, double>(), py::arg("f1"), py::arg("f2"))
      .def_readonly("f1", &ObjectiveVector::f1)
      .def_readonly("f2", &ObjectiveVector::f2)
      .def("__eq__", [](const ObjectiveVector& a, const ObjectiveVector& b) { return a == b; })
      .def("__repr__", [](const ObjectiveVector& o) {
        return "ObjectiveVector(" + std::to_string(o.f1) + ", " + std::to_string(o.f2) + ")";
      });

  py::class_<RankedIndividual>(m, "RankedIndividual")
      .def_readonly("id", &RankedIndividual::id)
      .def_readonly("objectives", &RankedIndividual::objectives)
      .def_readonly("front_rank", &RankedIndividual::front_rank)
      .def_readonly("crowding", &RankedIndividual::crowding);

  m.def("dominates", &dominates, py::arg("a"), py::arg("b"));
  m.def(
      "non_dominated_sort",
      [](const std::vector<ObjectiveVector>& pts) { return non_dominated_sort(pts); },
      py::arg("points"));
  m.def(
      "crowding_distance",
      [](const std::vector<ObjectiveVector>& front) { return crowding_distance(front); },
      py::arg("front"));
  m.def(
      "rank_population",
      [](const std::vector<ObjectiveVector>& pts) { return rank_population(pts); }, py::arg("points"));
  m.def(
      "nsga2_select",
      [](const std::vector<ObjectiveVector>& pts, std::size_t n) { return nsga2_select(pts, n); },
      py::arg("points"), py::arg("n"));

  // --- metrics ---------------------------------------------------------------
  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("asr", &EvalReport::asr)
      .def_readonly("dr", &EvalReport::dr)
      .def_readonly("fsdr", &EvalReport::fsdr)
      .def_readonly("n_images", &EvalReport::n_images)
      .def_readonly("n_successful", &EvalReport::n_successful)
      .def("csv_row", [](const EvalReport& r, const std::string& optimizer, const std::string& phase) {
        return to_csv_row(r, optimizer, phase);
      });

  m.def(
      "evaluate_pairs",
      [](const Classifier& c, const std::vector<Image>& originals, const std::vector<Image>& adversarials,
         const SqueezerConfig& cfg, double threshold, int threads) {
        const FeatureSqueezeDetector det(c, cfg, threshold);
        return evaluate_pairs(det, originals, adversarials, threads);
      },
      py::arg("classifier"), py::arg("originals"), py::arg("adversarials"),
      py::arg("config") = SqueezerConfig{}, py::arg("threshold") = kDefaultDetectionThreshold,
      py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());

  // --- search ----------------------------------------------------------------
  py::enum_<InnerKind>(m, "InnerKind")
      .value("GA", InnerKind::GA)
      .value("ES", InnerKind::ES)
      .value("Tournament", InnerKind::Tournament);

  py::class_<InnerSettings>(m, "InnerSettings")
      .def(py::init<>())
      .def_readwrite("population", &InnerSettings::population)
      .def_readwrite("generations", &InnerSettings::generations)
      .def_readwrite("mutation_prob", &InnerSettings::mutation_prob)
      .def_readwrite("es_lambda", &InnerSettings::es_lambda)
      .def_readwrite("es_sigma_scale", &InnerSettings::es_sigma_scale)
      .def_readwrite("es_eta_scale", &InnerSettings::es_eta_scale);

  py::class_<OuterConfig>(m, "OuterConfig")
      .def(py::init<>())
      .def_readwrite("population_size", &OuterConfig::population_size)
      .def_readwrite("epochs", &OuterConfig::epochs)
      .def_readwrite("chain_length", &OuterConfig::chain_length)
      .def_readwrite("mutation_prob", &OuterConfig::mutation_prob)
      .def_readwrite("batch_size", &OuterConfig::batch_size)
      .def_readwrite("inner", &OuterConfig::inner)
      .def_readwrite("seed", &OuterConfig::seed)
      .def_readwrite("inner_settings", &OuterConfig::inner_settings)
      .def_readwrite("threads", &OuterConfig::threads)
      .def("validate", &OuterConfig::validate);

  py::class_<HistoryRow>(m, "HistoryRow")
      .def_readonly("epoch", &HistoryRow::epoch)
      .def_readonly("batch", &HistoryRow::batch)
      .def_readonly("best", &HistoryRow::best)
      .def_readonly("queries", &HistoryRow::queries);

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("best", &RunResult::best)
      .def_readonly("best_objectives", &RunResult::best_objectives)
      .def_readonly("history", &RunResult::history)
      .def_property_readonly("final_population",
                             [](const RunResult& r) {
                               std::vector<std::pair<FilterChain, ObjectiveVector>> out;
                               for (const auto& c : r.final_population) {
                                 out.emplace_back(c.chain, c.objectives.value_or(ObjectiveVector{}));
                               }
                               return out;
                             })
      .def_readonly("queries", &RunResult::queries);

  m.def(
      "run",
      [](const OuterConfig& cfg, const LabeledDataset& train, const Classifier& c,
         const SqueezerConfig& squeezers, double threshold) {
        return run(cfg, train, c, squeezers, threshold);
      },
      py::arg("config"), py::arg("train"), py::arg("classifier"),
      py::arg("squeezers") = SqueezerConfig{}, py::arg("threshold") = kDefaultDetectionThreshold,
      py::call_guard<py::gil_scoped_release>());
}
