// Thin pybind11 layer. Tensors cross as numpy arrays (float64 or
// complex128); reports cross as JSON text and are decoded in Python.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <complex>
#include <string>
#include <vector>

#include "halluc/decoder.hpp"
#include "halluc/detail.hpp"
#include "halluc/feasible.hpp"
#include "halluc/hallucination.hpp"
#include "halluc/htk.hpp"
#include "halluc/io.hpp"
#include "halluc/service.hpp"

namespace py = pybind11;
using namespace halluc;

namespace {

// pybind11 holders cannot point to const; the models are immutable anyway.
using PyModel = std::shared_ptr<LinearForwardModel>;
PyModel wrap(ModelPtr m) { return std::const_pointer_cast<LinearForwardModel>(std::move(m)); }

Shape shape_of(const py::array& a) {
  Shape s;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) s.push_back(static_cast<std::size_t>(a.shape(i)));
  return s;
}

Tensor to_tensor(const py::array& a) {
  if (py::isinstance<py::array_t<std::complex<double>>>(a) || a.dtype().kind() == 'c') {
    const auto c = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>::ensure(a);
    return Tensor::complex(shape_of(c), std::vector<Complex>(c.data(), c.data() + c.size()));
  }
  const auto r = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(a);
  if (!r) throw ShapeError("expected a numeric array");
  return Tensor::real(shape_of(r), std::vector<double>(r.data(), r.data() + r.size()));
}

py::array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  if (t.is_complex()) {
    py::array_t<std::complex<double>> out(shape);
    std::copy(t.complex_values().begin(), t.complex_values().end(), out.mutable_data());
    return std::move(out);
  }
  py::array_t<double> out(shape);
  std::copy(t.real_values().begin(), t.real_values().end(), out.mutable_data());
  return std::move(out);
}

std::vector<Tensor> to_tensors(const std::vector<py::array>& arrays) {
  std::vector<Tensor> out;
  out.reserve(arrays.size());
  for (const py::array& a : arrays) out.push_back(to_tensor(a));
  return out;
}

NoiseBall make_ball(double epsilon, const std::string& norm) {
  NoiseBall b;
  b.epsilon = epsilon;
  b.norm = io::parse_norm_spec(norm);
  b.validate();
  return b;
}

PairedDataset make_dataset(const std::vector<py::array>& xs, const std::vector<py::array>& ys, const PyModel& model,
                           const std::optional<std::vector<py::array>>& fxs) {
  if (fxs) return PairedDataset::from_tuples(to_tensors(xs), to_tensors(*fxs), to_tensors(ys));
  if (!model) throw ContractError("either a model or fxs is required");
  return PairedDataset::from_model(to_tensors(xs), *model, to_tensors(ys));
}

/// Wraps a Python callable y -> array or list of arrays as a decoder.
DecoderPtr python_decoder(py::function fn, const std::string& name) {
  return make_function_decoder(name, [fn](const Tensor& y, std::size_t, std::uint64_t) {
    py::gil_scoped_acquire gil;
    py::object out = fn(to_array(y));
    std::vector<Tensor> result;
    if (py::isinstance<py::list>(out) || py::isinstance<py::tuple>(out)) {
      for (py::handle h : out) result.push_back(to_tensor(py::reinterpret_borrow<py::array>(py::array::ensure(h))));
    } else {
      result.push_back(to_tensor(py::array::ensure(out)));
    }
    return result;
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feasible-set and hallucination analysis core";
  m.attr("__version__") = kServiceVersion;

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_FileNotFoundError);

  py::class_<LinearForwardModel, PyModel>(m, "Model")
      .def_property_readonly("kind", [](const LinearForwardModel& f) { return model_kind_name(f.kind()); })
      .def_property_readonly("input_shape", &LinearForwardModel::input_shape)
      .def_property_readonly("output_shape", &LinearForwardModel::output_shape)
      .def("apply", [](const LinearForwardModel& f, const py::array& x) { return to_array(f.apply(to_tensor(x))); })
      .def("adjoint", [](const LinearForwardModel& f, const py::array& y) { return to_array(f.adjoint(to_tensor(y))); })
      .def(
          "nullspace_project",
          [](const LinearForwardModel& f, const py::array& v, double tol, int max_iter) {
            return to_array(nullspace_project(f, to_tensor(v), tol, max_iter).projected);
          },
          py::arg("v"), py::arg("tol") = 1e-8, py::arg("max_iter") = 500)
      .def("to_json", [](const LinearForwardModel& f) { return io::dump(io::model_to_json(f)); });

  m.def(
      "gaussian_meanpool",
      [](double sigma, std::size_t pool, std::size_t in_side, std::size_t pad) {
        return wrap(make_gaussian_meanpool(sigma, pool, in_side, pad));
      },
      py::arg("sigma") = 3.0, py::arg("pool") = 3, py::arg("in_side") = 28, py::arg("pad") = 4);
  m.def(
      "masked_fft",
      [](std::size_t side, std::size_t acc, std::size_t lines) { return wrap(make_masked_fft(side, acc, lines)); },
      py::arg("side") = 320, py::arg("acceleration") = 8, py::arg("center_lines") = 22);
  m.def(
      "bilinear_aa",
      [](std::size_t factor, std::size_t side, std::size_t bands) { return wrap(make_bilinear_aa(factor, side, bands)); },
      py::arg("factor") = 4, py::arg("in_side") = 512, py::arg("bands") = 1);
  m.def("matrix_model", [](const py::array& a) { return wrap(make_matrix_model(to_tensor(a))); }, py::arg("matrix"));
  m.def("first_coordinate_model", [] { return wrap(make_first_coordinate_model()); });
  m.def(
      "model_from_json", [](const std::string& text, const std::string& base_dir) {
        return wrap(io::model_from_json(io::json::parse(text), base_dir));
      },
      py::arg("text"), py::arg("base_dir") = ".");

  m.def(
      "seminorm",
      [](const py::array& a, const std::string& norm) { return roi_seminorm(to_tensor(a), io::parse_norm_spec(norm)); },
      py::arg("a"), py::arg("norm") = "l2");

  m.def(
      "analyze",
      [](const std::vector<py::array>& xs, const std::vector<py::array>& ys, double epsilon, const PyModel& model,
         const std::optional<std::vector<py::array>>& fxs, const std::string& norm, const std::string& x_norm,
         unsigned jobs) {
        const PairedDataset ds = make_dataset(xs, ys, model, fxs);
        py::gil_scoped_release release;
        const FeasibilityReport r = analyze(ds, make_ball(epsilon, norm), io::parse_norm_spec(x_norm), jobs);
        return io::dump(io::feasibility_report_to_json(r, ds));
      },
      py::arg("xs"), py::arg("ys"), py::arg("epsilon"), py::arg("model") = PyModel{}, py::arg("fxs") = py::none(),
      py::arg("norm") = "l2", py::arg("x_norm") = "l2", py::arg("jobs") = 1);

  m.def(
      "eta_interval",
      [](const PyModel& model, double epsilon, const py::array& x, const py::array& x_det,
         const std::vector<py::array>& noise, py::function decoder, const std::string& norm,
         const std::string& x_norm, const std::vector<double>& etas, std::uint64_t seed) {
        HallucinationQuery q;
        q.x = to_tensor(x);
        q.x_det = to_tensor(x_det);
        q.noise_samples = to_tensors(noise);
        q.problem = ForwardProblem{model, make_ball(epsilon, norm)};
        q.x_spec = io::parse_norm_spec(x_norm);
        q.decoder = {python_decoder(decoder, "python"), 1};
        q.seed = seed;
        const HallucinationReport r = eta_interval(q);
        io::json j = io::hallucination_report_to_json(r);
        io::json checks = io::json::array();
        for (double eta : etas) {
          checks.push_back({{"eta", eta},
                            {"transfer", verify_detail_transfer(r, eta)},
                            {"iff", io::iff_conditions_to_json(check_iff_conditions(q, r, eta))}});
        }
        j["eta_checks"] = checks;
        return io::dump(j);
      },
      py::arg("model"), py::arg("epsilon"), py::arg("x"), py::arg("x_det"), py::arg("noise"), py::arg("decoder"),
      py::arg("norm") = "l2", py::arg("x_norm") = "l2", py::arg("etas") = std::vector<double>{},
      py::arg("seed") = 0);

  m.def(
      "paste",
      [](const py::array& z, const py::array& y, const py::array& source, const std::vector<std::size_t>& start,
         const std::vector<std::size_t>& stop, const std::vector<long>& offset, std::size_t taper,
         const PyModel& model, double epsilon, const std::string& norm) {
        DetailSpec s;
        s.source = to_tensor(source);
        s.source_region = Box{start, stop};
        s.target_offset = offset.empty() ? std::vector<long>(start.size(), 0) : offset;
        s.taper_width = taper;
        const PasteResult r = paste(to_tensor(z), to_tensor(y), s, ForwardProblem{model, make_ball(epsilon, norm)});
        py::dict out;
        out["pasted"] = to_array(r.pasted);
        out["projected_detail"] = to_array(r.projected_detail);
        out["report"] = io::dump(io::paste_result_to_json(r));
        return out;
      },
      py::arg("z"), py::arg("y"), py::arg("source"), py::arg("start"), py::arg("stop"),
      py::arg("offset") = std::vector<long>{}, py::arg("taper") = 3, py::arg("model"), py::arg("epsilon"),
      py::arg("norm") = "l2");

  m.def(
      "converge",
      [](const std::string& set, const std::vector<std::size_t>& schedule, const std::vector<double>& probes,
         double epsilon, std::uint64_t seed, unsigned jobs) {
        const SyntheticSet s = synthetic_set_by_name(set);
        ForwardProblem p{make_first_coordinate_model(), NoiseBall{epsilon}};
        std::vector<Tensor> ys;
        for (double v : probes) ys.push_back(Tensor::real({1}, {v}));
        py::gil_scoped_release release;
        return io::dump(io::convergence_table_to_json(
            convergence_experiment(s, p, ys, schedule, seed, SeminormSpec::lq(2), jobs)));
      },
      py::arg("set") = "circle", py::arg("schedule") = std::vector<std::size_t>{100, 1000, 10000},
      py::arg("probes") = std::vector<double>{0.5}, py::arg("epsilon") = 0.2, py::arg("seed") = 0,
      py::arg("jobs") = 1);

  m.def(
      "patchify",
      [](const std::vector<py::array>& hr, const std::vector<py::array>& lr, std::size_t hr_patch,
         std::size_t lr_patch, std::size_t bands) {
        const PairedDataset ds = patchify(to_tensors(hr), to_tensors(lr), PatchOptions{hr_patch, lr_patch, bands});
        std::vector<py::array> xs, fxs;
        for (const Tensor& t : ds.xs) xs.push_back(to_array(t));
        for (const Tensor& t : ds.fxs) fxs.push_back(to_array(t));
        return py::make_tuple(xs, fxs, ds.ids);
      },
      py::arg("hr"), py::arg("lr"), py::arg("hr_patch") = 16, py::arg("lr_patch") = 4, py::arg("bands") = 4);

  m.def("htk_load", [](const std::string& path) { return to_array(htk::load(path)); }, py::arg("path"));
  m.def("htk_save", [](const std::string& path, const py::array& a) { htk::save(path, to_tensor(a)); },
        py::arg("path"), py::arg("array"));
}
