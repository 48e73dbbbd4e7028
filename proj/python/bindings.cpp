#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ctrlvdiff/cli.hpp"
#include "ctrlvdiff/codec.hpp"
#include "ctrlvdiff/datastore.hpp"
#include "ctrlvdiff/diffusion.hpp"
#include "ctrlvdiff/hmcs.hpp"
#include "ctrlvdiff/metrics.hpp"
#include "ctrlvdiff/sampler.hpp"
#include "ctrlvdiff/scenegen.hpp"

namespace py = pybind11;
using namespace ctrlvdiff;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const ModalityTensor& t) {
    const Shape& s = t.shape;
    py::array_t<float> out({s.frames, s.height, s.width, s.channels});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

ModalityTensor from_numpy(FloatArray a, Modality m, Space space) {
    if (a.ndim() != 4) throw ValidationError(std::string(name_of(m)) + ": expected a [T,H,W,C] array");
    const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                  static_cast<int>(a.shape(3))};
    ModalityTensor t(m, space, s);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

py::dict to_dict(const ModalityMap& ms) {
    py::dict d;
    for (const auto& [m, t] : ms) d[py::str(std::string(name_of(m)))] = to_numpy(t);
    return d;
}

ModalityMap from_dict(const py::dict& d) {
    ModalityMap out;
    for (const auto& [k, v] : d) {
        const Modality m = parse_modality(py::cast<std::string>(k));
        out.emplace(m, from_numpy(py::cast<FloatArray>(v), m, Space::native));
    }
    return out;
}

std::vector<Modality> modalities_of(const std::vector<std::string>& names) {
    std::vector<Modality> out;
    for (const auto& n : names) out.push_back(parse_modality(n));
    return out;
}

py::dict roles_dict(const RoleAssignment& r) {
    py::dict roles;
    for (Modality m : kAllModalities) roles[py::str(std::string(name_of(m)))] = std::string(name_of(r.of(m)));
    return roles;
}

}  // namespace

PYBIND11_MODULE(_ctrlvdiff, m) {
    m.doc() = "Multimodal video diffusion toolkit";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);
    py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

    m.def("modalities", [] {
        std::vector<std::string> out;
        for (Modality x : kAllModalities) out.emplace_back(name_of(x));
        return out;
    });
    m.def("palette_color", [](int id) {
        const Rgb c = palette_color(id);
        return py::make_tuple(c.r, c.g, c.b);
    });
    m.def(
        "to_color_space",
        [](const std::string& modality, FloatArray native) {
            const Modality md = parse_modality(modality);
            const ColorEncoded e = to_color_space(from_numpy(native, md, Space::native));
            py::dict meta;
            if (e.meta.depth) meta["depth_range"] = py::make_tuple(e.meta.depth->min, e.meta.depth->max);
            return py::make_tuple(to_numpy(e.tensor), meta);
        },
        py::arg("modality"), py::arg("native"));

    m.def(
        "assign_roles",
        [](std::uint64_t seed, double p_text, int n) {
            Rng rng(seed);
            const RoleAssignment r = n == kNumModalities ? assign_roles(rng, p_text) : assign_roles(rng, n, p_text);
            py::dict out;
            out["roles"] = roles_dict(r);
            out["text_only"] = r.text_only;
            out["k"] = r.k;
            out["d"] = r.d;
            return out;
        },
        py::arg("seed"), py::arg("p_text") = kDefaultTextProbability, py::arg("n") = kNumModalities);

    m.def(
        "generate_clip",
        [](std::uint64_t seed, int frames, int height, int width) {
            RenderConfig rc;
            rc.height = height;
            rc.width = width;
            const GeneratedClip g = generate_clip(seed, frames, rc);
            py::dict out;
            out["modalities"] = to_dict(g.modalities);
            out["caption"] = g.caption;
            out["pattern"] = std::string(name_of(g.trajectory.pattern));
            return out;
        },
        py::arg("seed"), py::arg("frames") = 8, py::arg("height") = 32, py::arg("width") = 32);

    m.def(
        "canny",
        [](FloatArray rgb, double lo, double hi) {
            return to_numpy(canny_edges(from_numpy(rgb, Modality::rgb, Space::native), lo, hi));
        },
        py::arg("rgb"), py::arg("lo") = kCannyLow, py::arg("hi") = kCannyHigh);

    py::class_<Codec>(m, "Codec")
        .def(py::init<int, std::uint64_t>(), py::arg("patch"), py::arg("seed") = kDefaultCodecSeed)
        .def_property_readonly("patch", &Codec::patch)
        .def_property_readonly("channels", &Codec::channels)
        .def(
            "encode",
            [](const Codec& c, FloatArray color) {
                const LatentTensor z = c.encode_clip(from_numpy(color, Modality::rgb, Space::color));
                py::array_t<double> out({z.grid.frames, z.grid.rows, z.grid.cols, z.grid.channels});
                std::copy(z.data.begin(), z.data.end(), out.mutable_data());
                return out;
            },
            py::arg("color"))
        .def(
            "decode",
            [](const Codec& c, py::array_t<double, py::array::c_style | py::array::forcecast> z) {
                if (z.ndim() != 4) throw ValidationError("decode: expected a [T,h,w,c] latent");
                LatentTensor lt;
                lt.grid = LatentGrid{static_cast<int>(z.shape(0)), static_cast<int>(z.shape(1)),
                                     static_cast<int>(z.shape(2)), static_cast<int>(z.shape(3))};
                lt.patch = c.patch();
                lt.data.assign(z.data(), z.data() + z.size());
                return to_numpy(c.decode_clip(lt));
            },
            py::arg("latent"));

    m.def(
        "write_clip",
        [](const std::filesystem::path& root, const std::string& clip_id, const py::dict& modalities,
           const std::string& caption, std::uint64_t seed, bool overwrite) {
            ClipRecord rec;
            rec.clip_id = clip_id;
            rec.caption = caption;
            rec.tensors = from_dict(modalities);
            require(!rec.tensors.empty(), "write_clip: no modalities given");
            const Shape& s = rec.tensors.begin()->second.shape;
            rec.meta.frames = s.frames;
            rec.meta.height = s.height;
            rec.meta.width = s.width;
            rec.meta.seed = seed;
            return write_clip(rec, root, WriteOptions{overwrite, true});
        },
        py::arg("root"), py::arg("clip_id"), py::arg("modalities"), py::arg("caption") = "", py::arg("seed") = 0,
        py::arg("overwrite") = false);
    m.def(
        "read_clip",
        [](const std::filesystem::path& root, const std::string& clip_id, const std::vector<std::string>& only) {
            const ClipRecord r = read_clip(root, clip_id, modalities_of(only));
            py::dict out;
            out["modalities"] = to_dict(r.tensors);
            out["caption"] = r.caption;
            out["seed"] = r.meta.seed;
            return out;
        },
        py::arg("root"), py::arg("clip_id"), py::arg("modalities") = std::vector<std::string>{});
    m.def("list_clips", &list_clips, py::arg("root"));

    m.def(
        "depth_metrics",
        [](FloatArray pred, FloatArray gt, bool align) {
            const DepthMetrics r = depth_metrics(from_numpy(pred, Modality::depth, Space::native),
                                                 from_numpy(gt, Modality::depth, Space::native), align);
            py::dict out;
            out["abs_rel"] = r.abs_rel;
            out["delta1"] = r.delta1;
            out["scale"] = r.scale;
            out["shift"] = r.shift;
            out["fallback"] = r.fallback;
            return out;
        },
        py::arg("pred"), py::arg("gt"), py::arg("align") = true);
    m.def(
        "normal_metrics",
        [](FloatArray pred, FloatArray gt) {
            const NormalMetrics r = normal_metrics(from_numpy(pred, Modality::normal, Space::native),
                                                   from_numpy(gt, Modality::normal, Space::native));
            py::dict out;
            out["mean_deg"] = r.mean_deg;
            out["median_deg"] = r.median_deg;
            out["acc_11_25"] = r.acc_11_25;
            out["acc_22_5"] = r.acc_22_5;
            out["acc_30"] = r.acc_30;
            out["excluded"] = r.excluded;
            return out;
        },
        py::arg("pred"), py::arg("gt"));
    m.def(
        "seg_iou",
        [](FloatArray pred_color, FloatArray gt_ids, int k) {
            const SegMetrics r = seg_iou(from_numpy(pred_color, Modality::segmentation, Space::color),
                                         from_numpy(gt_ids, Modality::segmentation, Space::native), k);
            return py::make_tuple(r.miou, r.per_instance);
        },
        py::arg("pred_color"), py::arg("gt_ids"), py::arg("k"));
    m.def(
        "psnr",
        [](FloatArray a, FloatArray b) {
            return psnr(from_numpy(a, Modality::rgb, Space::native), from_numpy(b, Modality::rgb, Space::native));
        },
        py::arg("pred"), py::arg("gt"));
    m.def(
        "ssim",
        [](FloatArray a, FloatArray b) {
            return ssim(from_numpy(a, Modality::rgb, Space::native), from_numpy(b, Modality::rgb, Space::native));
        },
        py::arg("pred"), py::arg("gt"));
    m.def(
        "temporal_consistency",
        [](FloatArray clip) { return temporal_consistency(from_numpy(clip, Modality::rgb, Space::native)); },
        py::arg("clip"));

    py::class_<Model>(m, "Model")
        .def_static("load", &load_model, py::arg("checkpoint"))
        .def(
            "generate",
            [](const Model& model, const py::dict& conditions, const std::vector<std::string>& targets,
               const std::string& caption, int steps, std::uint64_t seed, int frames) {
                GenerationRequest req;
                req.conditions = from_dict(conditions);
                req.targets = modalities_of(targets);
                req.caption = caption;
                req.steps = steps;
                req.seed = seed;
                req.frames = frames;
                GenerationResult r;
                {
                    py::gil_scoped_release release;
                    r = generate(model, req);
                }
                return to_dict(r.native);
            },
            py::arg("conditions"), py::arg("targets"), py::arg("caption") = "", py::arg("steps") = 50,
            py::arg("seed") = 0, py::arg("frames") = 0)
        .def(
            "understand",
            [](const Model& model, FloatArray rgb, const std::string& caption, int steps, std::uint64_t seed) {
                const ModalityTensor t = from_numpy(rgb, Modality::rgb, Space::native);
                GenerationResult r;
                {
                    py::gil_scoped_release release;
                    r = understand(model, t, caption, steps, seed);
                }
                return to_dict(r.native);
            },
            py::arg("rgb"), py::arg("caption") = "", py::arg("steps") = 50, py::arg("seed") = 0);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> full{"ctrlvdiff"};
            full.insert(full.end(), args.begin(), args.end());
            std::vector<const char*> argv;
            for (const auto& a : full) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line interface in-process; returns (exit code, stdout, stderr).");
}
