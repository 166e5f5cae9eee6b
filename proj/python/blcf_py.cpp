#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "blcf/bow.hpp"
#include "blcf/cli.hpp"
#include "blcf/descriptors.hpp"
#include "blcf/error.hpp"
#include "blcf/evalkit.hpp"
#include "blcf/index.hpp"
#include "blcf/tensor_io.hpp"
#include "blcf/vocab.hpp"
#include "blcf/weighting.hpp"

namespace py = pybind11;
using namespace blcf;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  std::vector<std::uint32_t> dims;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) dims.push_back(static_cast<std::uint32_t>(a.shape(i)));
  return Tensor(std::move(dims), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
  py::array_t<float> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

template <typename T>
py::array_t<T> matrix(const std::vector<T>& values, std::size_t rows, std::size_t cols) {
  py::array_t<T> out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

DescriptorSet to_descriptors(const FloatArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected an (n, d) array");
  return DescriptorSet(static_cast<std::size_t>(a.shape(1)),
                       std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> weights_array(const WeightMap& w) { return matrix(w.values, w.rows, w.cols); }

WeightMap to_weights(const FloatArray& a) {
  if (a.ndim() != 2) throw py::value_error("weights must be 2-D");
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
          std::vector<float>(a.data(), a.data() + a.size())};
}

AssignmentMap to_assignment(const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("assignment map must be 2-D");
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
          std::vector<std::uint32_t>(a.data(), a.data() + a.size())};
}

ApConvention convention(const std::string& name) { return parse_ap_convention(name); }

}  // namespace

PYBIND11_MODULE(_blcf, m) {
  m.doc() = "BLCF retrieval core";
  py::register_exception<Error>(m, "BlcfError", PyExc_ValueError);

  m.def("read_tensor", [](const std::filesystem::path& p) { return from_tensor(read_tensor(p)); });
  m.def("write_tensor",
        [](const std::filesystem::path& p, const FloatArray& a) { write_tensor(p, to_tensor(a)); });

  py::class_<PcaModel>(m, "PcaModel")
      .def_readonly("in_dim", &PcaModel::in_dim)
      .def_readonly("out_dim", &PcaModel::out_dim)
      .def_readonly("config_hash", &PcaModel::config_hash)
      .def_readonly("eigenvalues", &PcaModel::eigenvalues)
      .def_property_readonly("mean", [](const PcaModel& p) { return matrix(p.mean, 1, p.in_dim); })
      .def_property_readonly("basis",
                             [](const PcaModel& p) { return matrix(p.basis, p.out_dim, p.in_dim); })
      .def("save", [](const PcaModel& p, const std::filesystem::path& prefix) { save_pca(prefix, p); })
      .def_static("load", &load_pca);

  m.def("fit_pca", [](const FloatArray& x, std::size_t out_dim) {
    return fit_pca(to_descriptors(x), out_dim == 0 ? static_cast<std::size_t>(x.shape(1)) : out_dim);
  }, py::arg("features"), py::arg("out_dim") = 0);
  m.def("whiten", [](const FloatArray& v, const PcaModel& p) {
    const auto out = whiten({v.data(), static_cast<std::size_t>(v.size())}, p);
    return py::array_t<float>(static_cast<py::ssize_t>(out.size()), out.data());
  });
  m.def("postprocess", [](const FloatArray& v, const PcaModel& p) {
    const auto out = postprocess({v.data(), static_cast<std::size_t>(v.size())}, p);
    return py::array_t<float>(static_cast<py::ssize_t>(out.size()), out.data());
  });
  m.def("postprocess_map",
        [](const FloatArray& map, const PcaModel& p) { return from_tensor(postprocess_map(to_tensor(map), p)); });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_readonly("k", &Vocabulary::k)
      .def_readonly("dim", &Vocabulary::dim)
      .def_readonly("seed", &Vocabulary::seed)
      .def_readonly("iterations_run", &Vocabulary::iterations_run)
      .def_readonly("objective_history", &Vocabulary::objective_history)
      .def_property_readonly("centroids",
                             [](const Vocabulary& v) { return matrix(v.centroids, v.k, v.dim); })
      .def("save", [](const Vocabulary& v, const std::filesystem::path& prefix) {
        save_vocabulary(prefix, v);
      })
      .def_static("load", &load_vocabulary);

  m.def("train_vocabulary",
        [](const FloatArray& x, std::size_t k, std::size_t max_iters, std::uint64_t seed,
           bool approximate, std::size_t probes) {
          KMeansOptions o;
          o.k = k;
          o.max_iters = max_iters;
          o.seed = seed;
          o.mode = approximate ? SearchMode::approximate : SearchMode::exact;
          o.probes = probes;
          return train_vocabulary(to_descriptors(x), o);
        },
        py::arg("features"), py::arg("k"), py::arg("max_iters") = 25, py::arg("seed") = 0,
        py::arg("approximate") = false, py::arg("probes") = 0);
  m.def("assign_map", [](const FloatArray& map, const Vocabulary& v) {
    const AssignmentMap a = assign_map(to_tensor(map), v);
    return matrix(a.words, a.rows, a.cols);
  });
  m.def("upsample_query", [](const FloatArray& map) { return from_tensor(upsample_query(to_tensor(map))); });

  m.def("uniform_weights", [](std::size_t r, std::size_t c) { return weights_array(uniform_weights(r, c)); });
  m.def("gaussian_weights",
        [](std::size_t r, std::size_t c, double s) { return weights_array(gaussian_weights(r, c, s)); },
        py::arg("rows"), py::arg("cols"), py::arg("sigma_frac") = 1.0 / 3.0);
  m.def("l2norm_weights", [](const FloatArray& map) { return weights_array(l2norm_weights(to_tensor(map))); });
  m.def("downsample_saliency", [](const FloatArray& sal, std::size_t r, std::size_t c) {
    return weights_array(downsample_saliency(to_tensor(sal), r, c));
  });
  m.def("bms_saliency",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& rgb, int step,
           int dilation_width, double blur_sigma, bool whiten) {
          if (rgb.ndim() != 3 || rgb.shape(2) != 3) throw py::value_error("expected an (h, w, 3) uint8 image");
          RgbImage img{static_cast<std::size_t>(rgb.shape(1)), static_cast<std::size_t>(rgb.shape(0)),
                       std::vector<std::uint8_t>(rgb.data(), rgb.data() + rgb.size())};
          BmsOptions o;
          o.step = step;
          o.dilation_width = dilation_width;
          o.blur_sigma = blur_sigma;
          o.whiten = whiten;
          return from_tensor(bms_saliency(img, o));
        },
        py::arg("image"), py::arg("step") = 8, py::arg("dilation_width") = 7,
        py::arg("blur_sigma") = -1.0, py::arg("whiten") = true);

  py::class_<SparseBow>(m, "SparseBow")
      .def_readonly("image_id", &SparseBow::image_id)
      .def_readonly("k", &SparseBow::k)
      .def_property_readonly("entries",
                             [](const SparseBow& b) {
                               std::vector<std::pair<std::uint32_t, float>> out;
                               for (const auto& e : b.entries) out.emplace_back(e.word, e.weight);
                               return out;
                             })
      .def("to_dense",
           [](const SparseBow& b) {
             py::array_t<float> out(static_cast<py::ssize_t>(b.k));
             std::fill(out.mutable_data(), out.mutable_data() + b.k, 0.0f);
             for (const auto& e : b.entries) out.mutable_data()[e.word] = e.weight;
             return out;
           })
      .def("__len__", &SparseBow::nnz)
      .def("__eq__", [](const SparseBow& a, const SparseBow& b) { return a == b; });

  m.def("make_bow", [](std::string id, std::size_t k, const std::vector<std::pair<std::uint32_t, float>>& raw) {
    std::vector<BowEntry> entries;
    for (const auto& [w, v] : raw) entries.push_back({w, v});
    return make_bow(std::move(id), k, std::move(entries));
  });
  m.def("encode",
        [](const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>& words,
           const FloatArray& weights, std::size_t k, std::string image_id) {
          return encode(to_assignment(words), to_weights(weights), k, std::move(image_id));
        },
        py::arg("assignment"), py::arg("weights"), py::arg("k"), py::arg("image_id") = "");

  py::class_<InvertedIndex>(m, "InvertedIndex")
      .def_static("build", &InvertedIndex::build, py::arg("bows"), py::arg("k"))
      .def_static("load", &load_index)
      .def("save", [](const InvertedIndex& ix, const std::filesystem::path& p) { save_index(p, ix); })
      .def_property_readonly("k", &InvertedIndex::k)
      .def_property_readonly("doc_count", &InvertedIndex::doc_count)
      .def("query",
           [](const InvertedIndex& ix, const SparseBow& q, std::size_t top_n) {
             std::vector<std::pair<std::string, double>> out;
             for (const auto& r : ix.query(q, top_n)) out.emplace_back(r.image_id, r.score);
             return out;
           },
           py::arg("q"), py::arg("top_n") = kAllResults);

  m.def("expand_query",
        [](const SparseBow& q, const InvertedIndex& ix, std::size_t n, bool include_query) {
          return expand_query(q, ix.query(q), ix, n, include_query);
        },
        py::arg("q"), py::arg("index"), py::arg("n") = 10, py::arg("include_query") = true);

  m.def("average_precision",
        [](const std::vector<std::string>& ranking, const std::set<std::string>& positives,
           const std::set<std::string>& junk, const std::string& conv) {
          QueryGroundTruth gt;
          gt.positives = positives;
          gt.junk = junk;
          return average_precision(ranking, gt, convention(conv));
        },
        py::arg("ranking"), py::arg("positives"), py::arg("junk") = std::set<std::string>{},
        py::arg("convention") = "trapezoid");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    py::gil_scoped_release release;
    return cli::run(args);
  });
}
