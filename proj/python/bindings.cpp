#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "emoq/config.hpp"
#include "emoq/describe.hpp"
#include "emoq/gradsuite.hpp"
#include "emoq/metrics.hpp"
#include "emoq/run.hpp"

namespace py = pybind11;
using namespace emoq;

namespace {

std::map<std::string, std::string> as_settings(const py::dict& d) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : d) {
        std::string text = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false") : py::str(v).cast<std::string>();
        out[py::str(k).cast<std::string>()] = text;
    }
    return out;
}

RunConfig config_from(const py::dict& d) {
    const auto settings = as_settings(d);
    RunConfig cfg = profile_preset("synthetic");
    if (auto it = settings.find("profile"); it != settings.end()) apply_setting(cfg, "profile", it->second);
    for (const auto& [k, v] : settings) {
        if (k != "profile") apply_setting(cfg, k, v);
    }
    cfg.validate();
    return cfg;
}

Box to_box(const std::array<double, 4>& b) {
    Box box{b[0], b[1], b[2], b[3]};
    box.validate();
    return box;
}

py::dict history_dict(const FitResult& fit) {
    py::list rows;
    for (const auto& e : fit.history) {
        py::dict r;
        r["epoch"] = e.epoch;
        r["train_loss"] = e.train_loss;
        r["lr"] = e.lr;
        r["val_metric"] = e.val_metric;
        rows.append(r);
    }
    py::dict out;
    out["history"] = rows;
    out["best_epoch"] = fit.best_epoch;
    out["best_metric"] = fit.best_metric;
    return out;
}

py::dict report_dict(const MetricReport& r) {
    py::dict out;
    out["samples"] = r.samples;
    if (r.map) out["mAP"] = r.map->mean;
    if (r.auc) out["AUC"] = r.auc->mean;
    if (r.accuracy) out["accuracy"] = *r.accuracy;
    py::list strata;
    for (const auto& s : r.strata) {
        py::dict d;
        d["threshold"] = s.threshold;
        d["overlapping"] = s.overlapping;
        d["remaining"] = s.remaining;
        d["map_overlapping"] = s.map_overlapping ? py::cast(*s.map_overlapping) : py::none();
        d["map_remaining"] = s.map_remaining ? py::cast(*s.map_remaining) : py::none();
        strata.append(d);
    }
    out["strata"] = strata;
    out["text"] = r.to_text();
    return out;
}

}  // namespace

PYBIND11_MODULE(_emoq, m) {
    m.doc() = "emotion recognition from images, descriptions and a query transformer";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ManifestError>(m, "ManifestError", PyExc_ValueError);

    m.def("emotic_class_names", &emotic_class_names);
    m.def("caers_class_names", &caers_class_names);
    m.def(
        "build_prompt",
        [](const std::vector<std::string>& names, bool has_bbox) { return build_prompt({names, has_bbox}); },
        py::arg("class_names"), py::arg("has_bbox") = true);

    m.def(
        "average_precision",
        [](const std::vector<double>& s, const std::vector<int>& y) { return average_precision(s, y); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "roc_auc", [](const std::vector<double>& s, const std::vector<int>& y) { return roc_auc(s, y); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "iou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) { return iou(to_box(a), to_box(b)); },
        py::arg("a"), py::arg("b"));
    m.def("frame_indices", &frame_indices, py::arg("available"), py::arg("count"));

    m.def(
        "modality_ceiling",
        [](const py::dict& settings) {
            const auto c = single_modality_ceiling(config_from(settings).synth);
            return std::map<std::string, double>{{"vision", c.vision}, {"text", c.text}, {"chance", c.chance}};
        },
        py::arg("settings") = py::dict());

    m.def(
        "write_synthetic",
        [](const std::filesystem::path& out, const py::dict& settings) {
            const RunConfig cfg = config_from(settings);
            const auto train = synth_split(cfg.synth, cfg.synth.num_samples, cfg.synth.seed);
            const auto val = synth_split(cfg.synth, cfg.synth_val, cfg.synth.seed + 1);
            write_synthetic(out, train, val, cfg.synth.num_classes);
            return out / "manifest.jsonl";
        },
        py::arg("out"), py::arg("settings") = py::dict());

    m.def(
        "gradient_suite",
        [](std::uint64_t seed) {
            py::gil_scoped_release release;
            const GradSuiteReport r = run_gradient_suite(seed);
            std::map<std::string, double> errors;
            for (const auto& e : r.entries) errors[e.name] = e.result.max_rel_error;
            return std::make_pair(r.passed(), errors);
        },
        py::arg("seed") = 7);

    m.def(
        "train",
        [](const py::dict& settings) {
            const RunConfig cfg = config_from(settings);
            TrainOutcome out;
            {
                py::gil_scoped_release release;
                out = run_training(cfg);
            }
            py::dict d = history_dict(out.fit);
            d["checkpoint"] = out.checkpoint;
            d["history_csv"] = out.history;
            return d;
        },
        py::arg("settings"));

    m.def(
        "evaluate",
        [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest, const std::string& split,
           const std::vector<double>& iou_thresholds) {
            EvalOutcome out;
            {
                py::gil_scoped_release release;
                out = run_eval(load_checkpoint(checkpoint), manifest, split, iou_thresholds);
            }
            return report_dict(out.report);
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("split") = "", py::arg("iou_thresholds") = std::vector<double>{});
}
