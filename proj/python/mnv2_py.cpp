#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mnv2/dataset.hpp"
#include "mnv2/error.hpp"
#include "mnv2/metrics.hpp"
#include "mnv2/model.hpp"
#include "mnv2/parallel.hpp"
#include "mnv2/train.hpp"
#include "mnv2/weights.hpp"

namespace py = pybind11;
using namespace mnv2;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const FloatArray& a) {
  if (a.ndim() != 4) throw ShapeError("expected an [N, 3, S, S] float array");
  const Shape s{std::size_t(a.shape(0)), std::size_t(a.shape(1)), std::size_t(a.shape(2)),
                std::size_t(a.shape(3))};
  return Tensor(s, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray array_from(const Tensor& t) {
  const Shape s = t.shape();
  FloatArray out({s.n, s.c, s.h, s.w});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

FloatArray array_from(const Matrix& m) {
  FloatArray out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

ImageRGB8 image_from(const ByteArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an [H, W, 3] uint8 array");
  ImageRGB8 img(std::size_t(a.shape(1)), std::size_t(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

ByteArray array_from(const ImageRGB8& img) {
  ByteArray out({img.height, img.width, std::size_t(3)});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["accuracies"] = s.accuracies;
  d["throughputs"] = s.throughputs;
  d["mean_accuracy"] = s.mean_accuracy;
  d["mean_throughput"] = s.mean_throughput;
  d["min_accuracy"] = s.min_accuracy;
  d["max_accuracy"] = s.max_accuracy;
  d["disparity"] = s.disparity;
  return d;
}

} // namespace

PYBIND11_MODULE(_mnv2, m) {
  m.doc() = "MobileNetV2 inference engine bindings";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.attr("FEATURE_CHANNELS") = kFeatureChannels;
  m.attr("CLASS_NAMES") = std::vector<std::string>(kClassNames.begin(), kClassNames.end());

  m.def("set_threads", &set_thread_count, py::arg("n"));
  m.def("threads", &thread_count);

  m.def("parameter_count",
        [](std::size_t classes) { return parameter_count(build_mobilenetv2(classes)); },
        py::arg("num_classes") = kFoodClasses);

  m.def("write_synthetic_archive",
        [](const std::filesystem::path& path, std::size_t classes, std::uint64_t seed) {
          save_archive_file(path, synthetic_archive(classes, seed));
        },
        py::arg("path"), py::arg("num_classes") = kFoodClasses, py::arg("seed") = 0);

  m.def("validate_weights", [](const std::filesystem::path& path) {
    const ArchiveReport r = validate_topology(load_archive_file(path));
    py::dict d;
    d["tensor_count"] = r.tensor_count;
    d["backbone_tensors"] = r.backbone_tensors;
    d["head_classes"] = r.head_classes;
    d["bn_eps"] = r.bn_eps;
    return d;
  });

  py::class_<Model>(m, "Model")
      .def_static("load",
                  [](const std::filesystem::path& path, std::size_t classes, std::uint64_t head_seed) {
                    return load_model(load_archive_file(path), classes, head_seed);
                  },
                  py::arg("path"), py::arg("num_classes") = kFoodClasses, py::arg("head_seed") = 0)
      .def_static("synthetic",
                  [](std::size_t classes, std::uint64_t seed) {
                    return load_model(WeightArchive{kArchiveVersion, synthetic_archive(classes, seed)},
                                      classes, 0);
                  },
                  py::arg("num_classes") = kFoodClasses, py::arg("seed") = 0)
      .def_property_readonly("num_classes", [](const Model& mo) { return mo.classifier.num_classes(); })
      .def("features",
           [](const Model& mo, const FloatArray& x) {
             const Tensor t = tensor_from(x);
             Matrix f;
             {
               py::gil_scoped_release release;
               f = extract_features(mo, t);
             }
             return array_from(f);
           },
           py::arg("batch"))
      .def("forward",
           [](const Model& mo, const FloatArray& x) {
             const Tensor t = tensor_from(x);
             Matrix logits;
             {
               py::gil_scoped_release release;
               logits = forward(mo, t);
             }
             return array_from(logits);
           },
           py::arg("batch"));

  m.def("decode_image", [](const std::filesystem::path& p) { return array_from(decode_image(p)); });
  m.def("resize", [](const ByteArray& img, std::size_t size) {
    return array_from(resize_bilinear(image_from(img), size));
  });
  m.def("preprocess",
        [](const ByteArray& img, std::size_t size) {
          PreprocConfig cfg;
          cfg.size = size;
          cfg.validate();
          return array_from(main_transform(image_from(img), cfg));
        },
        py::arg("image"), py::arg("size") = 224);

  m.def("lr_at",
        [](std::size_t epoch, double lr0, std::size_t step, double gamma) {
          TrainConfig cfg;
          cfg.lr0 = lr0;
          cfg.lr_step = step;
          cfg.lr_gamma = gamma;
          cfg.validate();
          return lr_at(epoch, cfg);
        },
        py::arg("epoch"), py::arg("lr0") = 1e-3, py::arg("step") = 10, py::arg("gamma") = 0.1);

  m.def("sgd_step",
        [](FloatArray param, const FloatArray& grad, FloatArray velocity, double lr, double momentum,
           bool nesterov, double weight_decay) {
          TrainConfig cfg;
          cfg.momentum = momentum;
          cfg.nesterov = nesterov;
          cfg.weight_decay = weight_decay;
          std::vector<float> p(param.data(), param.data() + param.size());
          SgdState state;
          if (velocity.size()) state.velocity.assign(velocity.data(), velocity.data() + velocity.size());
          sgd_step(p, std::span<const float>(grad.data(), std::size_t(grad.size())), state, lr, cfg);
          FloatArray new_p(std::vector<py::ssize_t>{py::ssize_t(p.size())});
          FloatArray new_v(std::vector<py::ssize_t>{py::ssize_t(state.velocity.size())});
          std::copy(p.begin(), p.end(), new_p.mutable_data());
          std::copy(state.velocity.begin(), state.velocity.end(), new_v.mutable_data());
          return py::make_tuple(new_p, new_v);
        },
        py::arg("param"), py::arg("grad"), py::arg("velocity"), py::arg("lr"),
        py::arg("momentum") = 0.9, py::arg("nesterov") = true, py::arg("weight_decay") = 1e-4);

  m.def("summarize_runs",
        [](std::vector<double> acc, std::vector<double> ips) {
          return summary_dict(summarize_runs(std::move(acc), std::move(ips)));
        },
        py::arg("accuracies"), py::arg("throughputs") = std::vector<double>{});

  m.def("confusion",
        [](const std::vector<int>& truth, const std::vector<int>& predicted, std::size_t k) {
          if (truth.size() != predicted.size()) throw ShapeError("label lists differ in length");
          Metrics mt(k);
          for (std::size_t i = 0; i < truth.size(); ++i) mt.add(truth[i], predicted[i]);
          const auto norm = mt.normalized();
          py::array_t<std::uint64_t> raw({k, k});
          std::copy(mt.confusion().begin(), mt.confusion().end(), raw.mutable_data());
          py::array_t<double> n({k, k});
          for (std::size_t r = 0; r < k; ++r)
            for (std::size_t c = 0; c < k; ++c) n.mutable_at(r, c) = norm.at(r, c);
          py::dict d;
          d["accuracy"] = mt.accuracy();
          d["counts"] = raw;
          d["normalized"] = n;
          d["empty_rows"] = std::vector<bool>(norm.empty_rows.begin(), norm.empty_rows.end());
          return d;
        },
        py::arg("truth"), py::arg("predicted"), py::arg("num_classes"));

  m.def("dataset_stats", [](const std::filesystem::path& root) {
    const DatasetIndex index = scan(root);
    const DatasetStats s = stats(index);
    py::dict d;
    d["split_totals"] = std::vector<std::size_t>(s.split_totals.begin(), s.split_totals.end());
    d["total"] = s.total;
    d["csv"] = stats_csv(s);
    d["skipped"] = index.skipped.size();
    return d;
  });
}
