#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <string>
#include <vector>

#include "eretinex/error.hpp"
#include "eretinex/events.hpp"
#include "eretinex/gradcheck.hpp"
#include "eretinex/io.hpp"
#include "eretinex/metrics.hpp"
#include "eretinex/model.hpp"
#include "eretinex/synth.hpp"
#include "eretinex/trainer.hpp"

namespace py = pybind11;
using namespace eretinex;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
    Shape dims(a.shape(), a.shape() + a.ndim());
    return Tensor(dims, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> dims(t.dims().begin(), t.dims().end());
    py::array_t<float> out(dims);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

std::string as_value(const py::handle& v) {
    if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "1" : "0";
    return py::str(v);
}

template <class Config>
Config config_from(const py::object& overrides) {
    Config c;
    if (overrides.is_none()) return c;
    for (auto item : overrides.cast<py::dict>()) c.set(py::str(item.first).cast<std::string>(), as_value(item.second));
    c.validate();
    return c;
}

EventStream stream_from(py::array_t<std::int64_t, py::array::forcecast> x, py::array_t<std::int64_t, py::array::forcecast> y,
                        py::array_t<double, py::array::forcecast> t, py::array_t<std::int64_t, py::array::forcecast> p,
                        std::size_t width, std::size_t height) {
    const auto n = static_cast<std::size_t>(t.size());
    if (static_cast<std::size_t>(x.size()) != n || static_cast<std::size_t>(y.size()) != n ||
        static_cast<std::size_t>(p.size()) != n) {
        throw Error(ErrorCode::ShapeMismatch, "x, y, t and p must have the same length");
    }
    auto xs = x.unchecked(), ys = y.unchecked(), ps = p.unchecked();
    auto ts = t.unchecked();
    std::vector<Event> events(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto px = xs(i), py_ = ys(i);
        if (px < 0 || py_ < 0 || px > 65535 || py_ > 65535) {
            throw Error(ErrorCode::EventOutOfBounds, "event " + std::to_string(i) + " coordinate out of range");
        }
        if (ps(i) != 1 && ps(i) != -1) {
            throw Error(ErrorCode::InvalidPolarity, "event " + std::to_string(i) + " polarity must be +-1");
        }
        events[i] = Event{static_cast<std::uint16_t>(px), static_cast<std::uint16_t>(py_), ts(i),
                          static_cast<std::int8_t>(ps(i))};
    }
    return EventStream(width, height, std::move(events));
}

py::dict stream_to_dict(const EventStream& s) {
    const auto n = static_cast<py::ssize_t>(s.size());
    py::array_t<std::int64_t> x(n), y(n), p(n);
    py::array_t<double> t(n);
    for (py::ssize_t i = 0; i < n; ++i) {
        const Event& e = s.events()[i];
        x.mutable_at(i) = e.x;
        y.mutable_at(i) = e.y;
        t.mutable_at(i) = e.t;
        p.mutable_at(i) = e.p;
    }
    py::dict d;
    d["x"] = x;
    d["y"] = y;
    d["t"] = t;
    d["p"] = p;
    d["width"] = s.width();
    d["height"] = s.height();
    return d;
}

VoxelOptions voxel_options(std::size_t bins, std::size_t keep_first, std::size_t keep_count,
                           std::optional<double> window_begin, std::optional<double> window_end) {
    VoxelOptions o;
    o.bin_count = bins;
    o.keep_first = keep_first;
    o.keep_count = keep_count;
    o.window_begin = window_begin;
    o.window_end = window_end;
    return o;
}

py::dict report_dict(const metrics::MetricReport& r) {
    py::dict d;
    d["psnr"] = r.psnr;
    d["ssim"] = r.ssim;
    py::list rows;
    for (const auto& m : r.per_image) rows.append(py::make_tuple(m.id, m.psnr, m.ssim));
    d["per_image"] = rows;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Event-guided retinex low-light enhancement";

    // the module keeps the class alive
    static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    const py::arg_v window_begin = py::arg("window_begin") = py::none();
    const py::arg_v window_end = py::arg("window_end") = py::none();

    m.def(
        "voxelize",
        [](py::array_t<std::int64_t, py::array::forcecast> x, py::array_t<std::int64_t, py::array::forcecast> y,
           py::array_t<double, py::array::forcecast> t, py::array_t<std::int64_t, py::array::forcecast> p,
           std::size_t width, std::size_t height, std::size_t bins, std::size_t keep_first, std::size_t keep_count,
           std::optional<double> wb, std::optional<double> we) {
            EventStream s = stream_from(x, y, t, p, width, height);
            return to_numpy(voxelize(s, voxel_options(bins, keep_first, keep_count, wb, we)).data);
        },
        py::arg("x"), py::arg("y"), py::arg("t"), py::arg("p"), py::arg("width"), py::arg("height"),
        py::arg("bins") = 7, py::arg("keep_first") = 1, py::arg("keep_count") = 5, window_begin, window_end,
        "Voxel grid [keep_count, H, W] of an event stream given as parallel arrays.");

    m.def(
        "normalize_timestamps",
        [](py::array_t<double, py::array::forcecast> t, std::size_t bins, std::optional<double> wb,
           std::optional<double> we) {
            std::vector<Event> events(static_cast<std::size_t>(t.size()));
            for (std::size_t i = 0; i < events.size(); ++i) events[i].t = t.at(i);
            EventStream s(1, 1, std::move(events));
            return normalize_timestamps(s, voxel_options(bins, 0, bins, wb, we));
        },
        py::arg("t"), py::arg("bins") = 7, window_begin, window_end);

    m.def("read_events", [](const std::filesystem::path& path) { return stream_to_dict(load_events(path)); },
          py::arg("path"));
    m.def(
        "write_events",
        [](const std::filesystem::path& path, py::array_t<std::int64_t, py::array::forcecast> x,
           py::array_t<std::int64_t, py::array::forcecast> y, py::array_t<double, py::array::forcecast> t,
           py::array_t<std::int64_t, py::array::forcecast> p, std::size_t width, std::size_t height) {
            write_events(stream_from(x, y, t, p, width, height), path);
        },
        py::arg("path"), py::arg("x"), py::arg("y"), py::arg("t"), py::arg("p"), py::arg("width"), py::arg("height"));

    m.def("load_tensor", [](const std::filesystem::path& p) { return to_numpy(io::load_tensor(p)); }, py::arg("path"));
    m.def("save_tensor", [](const std::filesystem::path& p, const FloatArray& a) { io::save_tensor(to_tensor(a), p); },
          py::arg("path"), py::arg("array"));
    m.def("load_image", [](const std::filesystem::path& p) { return to_numpy(io::load_image(p)); }, py::arg("path"));
    m.def("save_image", [](const std::filesystem::path& p, const FloatArray& a) { io::save_image(to_tensor(a), p); },
          py::arg("path"), py::arg("image"));

    m.def("psnr", [](const FloatArray& a, const FloatArray& b) { return metrics::psnr(to_tensor(a), to_tensor(b)); },
          py::arg("pred"), py::arg("target"), "PSNR in dB for data range 1; inf for identical images.");
    m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return metrics::ssim(to_tensor(a), to_tensor(b)); },
          py::arg("pred"), py::arg("target"));
    m.def("mae", [](const FloatArray& a, const FloatArray& b) { return metrics::mae(to_tensor(a), to_tensor(b)); },
          py::arg("pred"), py::arg("target"));

    m.def(
        "lr_at",
        [](std::size_t step, std::size_t total, const py::object& cfg) {
            return train::lr_at(step, total, config_from<train::TrainConfig>(cfg));
        },
        py::arg("step"), py::arg("total_steps"), py::arg("config") = py::none());

    m.def(
        "count_cost",
        [](const py::object& cfg, std::size_t h, std::size_t w) {
            CostReport r = count_cost(config_from<ModelConfig>(cfg), h, w);
            py::dict d;
            d["params"] = r.params;
            d["flops"] = r.flops;
            d["flops_by_stage"] = r.flops_by_stage;
            return d;
        },
        py::arg("config") = py::none(), py::arg("height") = 256, py::arg("width") = 256);

    m.def("gradcheck_ops", &gradcheck::op_names);
    m.def(
        "gradcheck",
        [](const std::string& name) {
            gradcheck::Report r = gradcheck::check_op(name);
            return py::make_tuple(r.passed(), r.max_rel_error);
        },
        py::arg("op"), "Returns (passed, max relative error) for one registered op.");

    m.def(
        "synth_sample",
        [](const py::object& cfg, std::uint64_t seed) {
            synth::PairedSample s = synth::make_sample(config_from<synth::SynthConfig>(cfg), seed);
            py::dict d;
            d["gt"] = to_numpy(s.gt);
            d["low"] = to_numpy(s.low);
            d["illum"] = to_numpy(s.illum);
            d["events"] = stream_to_dict(s.events);
            return d;
        },
        py::arg("config") = py::none(), py::arg("seed") = 0);
    m.def(
        "build_dataset",
        [](const std::filesystem::path& out, std::size_t n, const py::object& cfg) {
            synth::build_dataset(config_from<synth::SynthConfig>(cfg), n, out);
            return out / synth::kManifestName;
        },
        py::arg("out_dir"), py::arg("n"), py::arg("config") = py::none(), "Writes a dataset; returns the manifest path.");

    py::class_<ERetinexModel>(m, "Model")
        .def(py::init([](const py::object& cfg, std::uint64_t seed) {
                 return ERetinexModel(config_from<ModelConfig>(cfg), seed);
             }),
             py::arg("config") = py::none(), py::arg("seed") = 0)
        .def_static("load", [](const std::filesystem::path& p) {
            return ERetinexModel::from_checkpoint(io::load_checkpoint(p));
        })
        .def("save", [](const ERetinexModel& self, const std::filesystem::path& p) {
            io::save_checkpoint(self.to_checkpoint(), p);
        })
        .def_property_readonly("config", [](const ERetinexModel& self) { return self.config().to_text(); })
        .def_property_readonly("num_parameters",
                               [](const ERetinexModel& self) { return self.to_checkpoint().element_count(); })
        .def("zero_parameters", &ERetinexModel::zero_parameters)
        .def(
            "enhance",
            [](const ERetinexModel& self, const FloatArray& image, const FloatArray& voxels,
               std::optional<double> lmap_override) {
                EnhanceOptions opt;
                opt.lmap_override = lmap_override;
                opt.compute_mid = false;
                NoGradGuard ng;
                EnhanceResult<float> r = self.enhance(to_tensor(image), to_tensor(voxels), opt);
                py::dict d;
                d["out"] = to_numpy(r.out);
                d["lit"] = to_numpy(r.lit);
                d["lmap"] = to_numpy(r.lmap.data);
                return d;
            },
            py::arg("image"), py::arg("voxels"), py::arg("lmap_override") = py::none(),
            "image [3,H,W], voxels [bins,H,W]; returns dict with out, lit and lmap.")
        .def(
            "evaluate",
            [](const ERetinexModel& self, const std::filesystem::path& manifest, const std::string& split) {
                auto samples = train::load_split(synth::read_manifest(manifest), split);
                return report_dict(train::evaluate(self, samples));
            },
            py::arg("manifest"), py::arg("split") = "test");

    m.def(
        "train",
        [](const std::filesystem::path& manifest, const py::object& model_cfg, const py::object& train_cfg) {
            train::TrainResult r = train::train(config_from<ModelConfig>(model_cfg),
                                                config_from<train::TrainConfig>(train_cfg),
                                                synth::read_manifest(manifest));
            py::list log;
            for (const auto& e : r.log) log.append(e.to_line());
            return py::make_tuple(std::move(r.model), report_dict(r.final_eval), log);
        },
        py::arg("manifest"), py::arg("model_config") = py::none(), py::arg("train_config") = py::none(),
        "Returns (model, final evaluation, log lines).");
}
