#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "sacsim/error.hpp"
#include "sacsim/manifest.hpp"
#include "sacsim/oracle.hpp"
#include "sacsim/packer.hpp"
#include "sacsim/scheduler.hpp"
#include "sacsim/sim.hpp"

namespace py = pybind11;
using namespace sac;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

QuantTensor to_tensor(const U8Array& a, int lsb_exp = 0) {
    if (a.ndim() != 3) throw ShapeError("expected a (C, H, W) uint8 array");
    const Shape3 shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                       static_cast<std::size_t>(a.shape(2))};
    return QuantTensor(shape, std::vector<std::uint8_t>(a.data(), a.data() + a.size()), lsb_exp);
}

U8Array to_array(const QuantTensor& t) {
    const auto& s = t.shape();
    U8Array out({s.channels, s.height, s.width});
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
    return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
    const std::string s = b;
    return {s.begin(), s.end()};
}

py::dict report_dict(const SimReport& r) {
    return py::module_::import("json").attr("loads")(r.to_json());
}

SimOptions options(const std::string& fidelity, bool zero_skip) { return {parse_fidelity(fidelity), zero_skip}; }

}  // namespace

PYBIND11_MODULE(_sacsim, m) {
    m.doc() = "Power-of-two CNN packing, tiling and SAC systolic array simulation";

    py::register_exception<ManifestError>(m, "ManifestError", PyExc_ValueError);
    py::register_exception<RangeError>(m, "RangeError", PyExc_OverflowError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.def(
        "log_quantize",
        [](double x) -> py::object {
            const auto w = log_quantize(x);
            if (w.is_zero()) return py::none();
            return py::make_tuple(w.sign(), w.exponent());
        },
        py::arg("x"), "Nearest signed power of two as (sign, exponent), or None for zero.");

    m.def(
        "encode_cell",
        [](unsigned index, int sign, std::optional<int> exponent, unsigned group_size) {
            const auto w = exponent ? PowTwoWeight::value(sign, *exponent) : PowTwoWeight::zero();
            return encode_cell(index, w, group_size).byte;
        },
        py::arg("index"), py::arg("sign"), py::arg("exponent"), py::arg("group_size") = kMaxGroup,
        "Cell byte for a weight; exponent None encodes the zero weight.");
    m.def(
        "decode_cell",
        [](std::uint8_t byte) -> py::tuple {
            const auto [index, w] = decode_cell(CellCode{byte});
            if (w.is_zero()) return py::make_tuple(index, 0, py::none());
            return py::make_tuple(index, w.sign(), w.exponent());
        },
        py::arg("byte"), "(index, sign, exponent); exponent is None for the zero cell.");

    py::class_<ModelManifest>(m, "Manifest")
        .def_property_readonly("input_shape",
                               [](const ModelManifest& mm) {
                                   return py::make_tuple(mm.input_shape.channels, mm.input_shape.height,
                                                         mm.input_shape.width);
                               })
        .def_readonly("reshape_factor", &ModelManifest::reshape_factor)
        .def_readonly("clock_mhz", &ModelManifest::clock_mhz)
        .def_property_readonly("num_layers", [](const ModelManifest& mm) { return mm.layers.size(); })
        .def_property_readonly("classes", [](const ModelManifest& mm) { return mm.fc.filters; })
        .def("dumps", &dump_manifest)
        .def("__eq__", [](const ModelManifest& a, const ModelManifest& b) { return a == b; });

    m.def("load_manifest", &load_manifest, py::arg("text"));
    m.def("load_manifest_file", &load_manifest_file, py::arg("path"));

    m.def(
        "gen_model",
        [](std::uint64_t seed, const std::string& topology, std::size_t max_layers, std::size_t max_channels) {
            if (topology == "imagenet_small56") return oracle::gen_synthetic(seed, oracle::imagenet_small56());
            if (topology != "random") throw std::invalid_argument("topology must be 'random' or 'imagenet_small56'");
            return oracle::gen_synthetic(seed, oracle::random_topology(seed, max_layers, max_channels));
        },
        py::arg("seed"), py::arg("topology") = "random", py::arg("max_layers") = 4, py::arg("max_channels") = 32);
    m.def(
        "gen_image",
        [](std::uint64_t seed, std::tuple<std::size_t, std::size_t, std::size_t> shape, double zero_fraction) {
            const auto [c, h, w] = shape;
            return to_array(oracle::gen_image(seed, {c, h, w}, zero_fraction));
        },
        py::arg("seed"), py::arg("shape"), py::arg("zero_fraction") = 0.0);

    m.def(
        "reshape_input", [](const U8Array& img, int r) { return to_array(reshape_input(to_tensor(img), r)); },
        py::arg("image"), py::arg("factor"));
    m.def(
        "restore_input",
        [](const U8Array& t, int r, std::size_t channels) { return to_array(restore_input(to_tensor(t), r, channels)); },
        py::arg("tensor"), py::arg("factor"), py::arg("channels"));

    m.def(
        "pack",
        [](const ModelManifest& mm) {
            const auto f = fold_model(mm);
            std::vector<std::uint8_t> out;
            std::vector<std::size_t> dropped;
            for (std::size_t l = 0; l <= f.layers.size(); ++l) {
                const auto p = combine_columns(l < f.layers.size() ? f.layers[l] : f.fc);
                append_packed(out, p);
                dropped.push_back(p.dropped);
            }
            return py::make_tuple(to_bytes(out), dropped);
        },
        py::arg("manifest"), "Packed records of every layer then the fc, with per-layer dropped counts.");

    py::class_<CompiledModel>(m, "CompiledModel")
        .def_property_readonly("array", [](const CompiledModel& c) { return c.array.to_string(); })
        .def_property_readonly("instructions",
                               [](const CompiledModel& c) {
                                   std::vector<std::uint64_t> words;
                                   for (const auto& i : c.instructions()) words.push_back(encode_instruction(i));
                                   return words;
                               })
        .def_property_readonly("dropped_weights", &CompiledModel::dropped_weights)
        .def("stream", [](const CompiledModel& c) { return to_bytes(serialize_stream(c)); });

    m.def(
        "compile",
        [](const ModelManifest& mm, const std::string& array) { return compile_model(mm, ArrayConfig::parse(array)); },
        py::arg("manifest"), py::arg("array") = "128x64");
    m.def(
        "bind_stream",
        [](const py::bytes& stream, const ModelManifest& mm) {
            return bind_stream(parse_stream(from_bytes(stream)), mm);
        },
        py::arg("stream"), py::arg("manifest"));

    m.def(
        "simulate",
        [](const CompiledModel& c, const U8Array& image, const std::string& fidelity, bool zero_skip) {
            SimReport r;
            {
                py::gil_scoped_release release;
                r = run_model(c, to_tensor(image, c.model.lsb_exp), options(fidelity, zero_skip));
            }
            return report_dict(r);
        },
        py::arg("compiled"), py::arg("image"), py::arg("fidelity") = "word", py::arg("zero_skip") = true,
        "Runs the model on the array and returns the report as a dict.");

    m.def(
        "reference_logits",
        [](const ModelManifest& mm, const U8Array& image) {
            return oracle::ref_forward(mm, to_tensor(image, mm.lsb_exp)).logits;
        },
        py::arg("manifest"), py::arg("image"), "Logits of the independent reference forward pass.");
}
