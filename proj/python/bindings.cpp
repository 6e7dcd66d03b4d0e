#include "postdae/crf.hpp"
#include "postdae/dae.hpp"
#include "postdae/degrade.hpp"
#include "postdae/error.hpp"
#include "postdae/metrics.hpp"
#include "postdae/parallel.hpp"
#include "postdae/synth.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using nlohmann::json;
using namespace postdae;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

LabelMask to_mask(const MaskArray& a, int num_classes)
{
    if (a.ndim() != 2) {
        throw ContractError("mask array must be 2-D (height, width)");
    }
    const auto h = static_cast<int>(a.shape(0));
    const auto w = static_cast<int>(a.shape(1));
    std::vector<std::uint8_t> labels(a.data(), a.data() + a.size());
    return LabelMask(w, h, num_classes, std::move(labels));
}

MaskArray from_mask(const LabelMask& m)
{
    MaskArray out({m.height(), m.width()});
    std::memcpy(out.mutable_data(), m.labels().data(), m.size());
    return out;
}

GrayImage to_image(const RealArray& a)
{
    if (a.ndim() != 2) {
        throw ContractError("image array must be 2-D (height, width)");
    }
    return GrayImage(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                     std::vector<double>(a.data(), a.data() + a.size()));
}

RealArray from_image(const GrayImage& img)
{
    RealArray out({img.height(), img.width()});
    std::memcpy(out.mutable_data(), img.intensities().data(), img.size() * sizeof(double));
    return out;
}

/// (height, width, classes) array; matches the pixel-major storage order.
SoftMask to_soft(const RealArray& a)
{
    if (a.ndim() != 3) {
        throw ContractError("soft mask array must be 3-D (height, width, classes)");
    }
    return SoftMask(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), static_cast<int>(a.shape(2)),
                    std::vector<double>(a.data(), a.data() + a.size()));
}

RealArray from_soft(const SoftMask& s)
{
    RealArray out({s.height(), s.width(), s.num_classes()});
    std::memcpy(out.mutable_data(), s.probs().data(), s.probs().size() * sizeof(double));
    return out;
}

std::vector<LabelMask> to_masks(const std::vector<MaskArray>& arrays, int num_classes)
{
    std::vector<LabelMask> out;
    out.reserve(arrays.size());
    for (const auto& a : arrays) {
        out.push_back(to_mask(a, num_classes));
    }
    return out;
}

template <class T>
T parse(const std::string& text)
{
    return text.empty() ? T{} : json::parse(text).get<T>();
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Post-DAE core: synthetic scenes, degradation, denoising autoencoder, dense CRF, metrics";

    auto base = py::register_exception<Error>(m, "Error", PyExc_ValueError);
    py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
    py::register_exception<InsufficientDataError>(m, "InsufficientDataError", base.ptr());

    m.def("set_threads", &set_thread_count, py::arg("threads"));
    m.def("threads", &thread_count);

    m.def(
        "generate_scene",
        [](const std::string& config, std::uint64_t index) {
            const auto s = synth::generate_scene(parse<synth::SceneConfig>(config), index);
            return py::make_tuple(from_image(s.image), from_mask(s.mask));
        },
        py::arg("config"), py::arg("index"));

    m.def(
        "degradation_preset",
        [](const std::string& severity, std::uint64_t seed) {
            return json(degrade::preset(degrade::severity_from_string(severity), seed)).dump();
        },
        py::arg("severity"), py::arg("seed") = 0);
    m.def(
        "degrade",
        [](const MaskArray& mask, int num_classes, const std::string& config, std::uint64_t index) {
            return from_mask(degrade::degrade(to_mask(mask, num_classes), parse<degrade::DegradationConfig>(config), index));
        },
        py::arg("mask"), py::arg("num_classes"), py::arg("config"), py::arg("index"));

    m.def(
        "fit_weak_classifier",
        [](const std::vector<RealArray>& images, const std::vector<MaskArray>& masks, int num_classes) {
            std::vector<GrayImage> imgs;
            for (const auto& a : images) {
                imgs.push_back(to_image(a));
            }
            return json(synth::fit_weak_classifier(imgs, to_masks(masks, num_classes))).dump();
        },
        py::arg("images"), py::arg("masks"), py::arg("num_classes"));
    m.def(
        "weak_segment",
        [](const RealArray& image, const std::string& params, std::uint64_t stream) {
            return from_soft(synth::weak_segment(to_image(image), parse<synth::WeakClassifierParams>(params), stream));
        },
        py::arg("image"), py::arg("params"), py::arg("stream") = 0);

    m.def(
        "crf_params", [](int size) { return json(crf::CrfParams::for_size(size)).dump(); }, py::arg("size"));
    m.def(
        "crf",
        [](const RealArray& unary, const RealArray& image, const std::string& params) {
            const auto u = to_soft(unary);
            const auto img = to_image(image);
            const auto p = params.empty() ? crf::CrfParams::for_size(std::max(img.width(), img.height()))
                                          : parse<crf::CrfParams>(params);
            py::gil_scoped_release release;
            auto out = crf::meanfield_infer(u, img, p);
            py::gil_scoped_acquire acquire;
            return from_soft(out);
        },
        py::arg("unary"), py::arg("image"), py::arg("params") = "");

    m.def(
        "dice",
        [](const MaskArray& a, const MaskArray& b, int label, int num_classes) {
            return metrics::dice(to_mask(a, num_classes), to_mask(b, num_classes), label);
        },
        py::arg("a"), py::arg("b"), py::arg("label"), py::arg("num_classes"));
    m.def(
        "hausdorff",
        [](const MaskArray& a, const MaskArray& b, int label, int num_classes) {
            return metrics::hausdorff(to_mask(a, num_classes), to_mask(b, num_classes), label);
        },
        py::arg("a"), py::arg("b"), py::arg("label"), py::arg("num_classes"));
    m.def(
        "wilcoxon",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            const auto r = metrics::wilcoxon_signed_rank(x, y);
            py::dict d;
            d["p_value"] = r.p_value;
            d["statistic"] = r.statistic;
            d["n"] = r.n;
            d["exact"] = r.exact;
            return d;
        },
        py::arg("x"), py::arg("y"));

    py::class_<dae::DaeModel>(m, "Model")
        .def_static("load", &dae::DaeModel::load, py::arg("path"))
        .def("save", &dae::DaeModel::save, py::arg("path"))
        .def_property_readonly("config", [](const dae::DaeModel& self) { return json(self.config()).dump(); })
        .def_property_readonly("parameter_count", &dae::DaeModel::parameter_count)
        .def(
            "postprocess",
            [](const dae::DaeModel& self, const MaskArray& mask) {
                return from_mask(dae::postprocess(self, to_mask(mask, self.config().num_classes)));
            },
            py::arg("mask"))
        .def(
            "postprocess_soft",
            [](const dae::DaeModel& self, const RealArray& soft) {
                return from_mask(dae::postprocess(self, to_soft(soft)));
            },
            py::arg("soft"))
        .def(
            "plausibility",
            [](const dae::DaeModel& self, const MaskArray& mask) {
                return dae::plausibility_score(self, to_mask(mask, self.config().num_classes));
            },
            py::arg("mask"))
        .def(
            "encode",
            [](const dae::DaeModel& self, const MaskArray& mask) {
                const auto z = dae::encode(self, to_mask(mask, self.config().num_classes));
                RealArray out(static_cast<py::ssize_t>(z.data().size()));
                std::memcpy(out.mutable_data(), z.data().data(), z.data().size() * sizeof(double));
                return out;
            },
            py::arg("mask"));

    m.def(
        "build_model",
        [](const std::string& config, std::uint64_t seed) { return dae::build_dae(parse<dae::DaeConfig>(config), seed); },
        py::arg("config"), py::arg("seed") = 0);
    m.def(
        "default_model_config",
        [](int num_classes, int input_size) { return json(dae::DaeConfig::defaults(num_classes, input_size)).dump(); },
        py::arg("num_classes") = 2, py::arg("input_size") = 64);
    m.def("default_train_config", [] { return json(dae::TrainConfig{}).dump(); });
    m.def(
        "train",
        [](const std::vector<MaskArray>& masks, int num_classes, const std::string& train_config,
           const std::string& model_config, std::function<void(int, double)> on_epoch) {
            const auto data = to_masks(masks, num_classes);
            const auto tc = parse<dae::TrainConfig>(train_config);
            const auto dc = model_config.empty() ? dae::DaeConfig::defaults(num_classes, data.empty() ? 64 : data[0].width())
                                                 : parse<dae::DaeConfig>(model_config);
            dae::TrainOptions opt;
            if (on_epoch) {
                opt.on_epoch = [&](const dae::EpochRecord& r) { on_epoch(r.epoch, r.mean_loss); };
            }
            auto result = dae::train(data, tc, dc, opt);
            std::vector<double> history;
            for (const auto& r : result.history) {
                history.push_back(r.mean_loss);
            }
            return py::make_tuple(std::move(result.model), history);
        },
        py::arg("masks"), py::arg("num_classes"), py::arg("train_config") = "", py::arg("model_config") = "",
        py::arg("on_epoch") = nullptr);
}
