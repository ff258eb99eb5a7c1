#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <torch/torch.h>

#include "dems/bridge.hpp"
#include "dems/data.hpp"
#include "dems/loss.hpp"
#include "dems/metrics.hpp"
#include "dems/net.hpp"
#include "dems/oaa.hpp"
#include "dems/train.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

dems::Image to_image(const FloatArray& array) {
    if (array.ndim() != 2) throw std::invalid_argument("expected a 2D float array");
    dems::Image img(static_cast<int>(array.shape(0)), static_cast<int>(array.shape(1)));
    std::memcpy(img.data.data(), array.data(), img.data.size() * sizeof(float));
    return img;
}

dems::Mask to_mask(const ByteArray& array) {
    if (array.ndim() != 2) throw std::invalid_argument("expected a 2D uint8 array");
    dems::Mask mask(static_cast<int>(array.shape(0)), static_cast<int>(array.shape(1)));
    std::memcpy(mask.data.data(), array.data(), mask.data.size());
    for (auto v : mask.data) {
        if (v > 1) throw std::invalid_argument("mask values must be 0 or 1");
    }
    return mask;
}

py::array from_image(const dems::Image& img) {
    py::array_t<float> out({img.height, img.width});
    std::memcpy(out.mutable_data(), img.data.data(), img.data.size() * sizeof(float));
    return out;
}

py::array from_mask(const dems::Mask& mask) {
    py::array_t<std::uint8_t> out({mask.height, mask.width});
    std::memcpy(out.mutable_data(), mask.data.data(), mask.data.size());
    return out;
}

torch::Tensor to_tensor64(const DoubleArray& array) {
    if (array.ndim() != 2) throw std::invalid_argument("expected a 2D array");
    auto t = torch::empty({array.shape(0), array.shape(1)}, torch::kFloat64);
    std::memcpy(t.data_ptr<double>(), array.data(),
                static_cast<std::size_t>(array.size()) * sizeof(double));
    return t;
}

py::dict plan_to_dict(const dems::AugmentationPlan& plan) {
    py::list transforms;
    for (const auto& t : plan.transforms) {
        transforms.append(py::make_tuple(dems::transform_spec(t.kind).name, t.magnitude,
                                         t.apply));
    }
    py::dict out;
    out["sub_strategy"] = plan.sub_strategy;
    out["level"] = plan.level;
    out["transforms"] = transforms;
    return out;
}

dems::AugmentationPlan plan_from_dict(const py::dict& d) {
    dems::AugmentationPlan plan;
    plan.sub_strategy = d["sub_strategy"].cast<int>();
    plan.level = d["level"].cast<int>();
    for (const auto& item : d["transforms"].cast<py::list>()) {
        const auto tuple = item.cast<py::tuple>();
        dems::PlannedTransform t;
        t.kind = dems::transform_spec(tuple[0].cast<std::string>()).kind;
        t.magnitude = tuple[1].cast<double>();
        t.apply = tuple[2].cast<bool>();
        plan.transforms.push_back(t);
    }
    dems::validate_plan(plan);
    return plan;
}

py::dict record_to_dict(const dems::MetricRecord& r) {
    py::dict out;
    out["id"] = r.id;
    out["dsc"] = r.dsc;
    out["iou"] = r.iou;
    out["sen"] = r.sen;
    out["pre"] = r.pre;
    out["pa"] = r.pa;
    return out;
}

py::dict report_to_dict(const dems::MetricReport& report) {
    py::dict out;
    out["mean"] = record_to_dict(report.mean);
    out["stddev"] = record_to_dict(report.stddev);
    py::list per_image;
    for (const auto& r : report.per_image) per_image.append(record_to_dict(r));
    out["per_image"] = per_image;
    return out;
}

dems::EvalSubset subset_from_name(const std::string& name) {
    if (name == "val") return dems::EvalSubset::Val;
    if (name == "train") return dems::EvalSubset::Train;
    if (name == "all") return dems::EvalSubset::All;
    if (name == "external") return dems::EvalSubset::External;
    throw std::invalid_argument("subset must be val, train, all or external");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "C++ core of the semi-supervised segmentation toolkit";
    m.attr("__version__") = "0.1.0";

    // ---- augmentation -----------------------------------------------------
    m.def(
        "magnitude_cap",
        [](const std::string& name, int level) {
            return dems::magnitude_cap(dems::transform_spec(name), level);
        },
        py::arg("transform"), py::arg("level"),
        "Level-scaled magnitude bound of one transform");

    m.def(
        "sample_plan",
        [](std::uint64_t seed, int level) {
            dems::RandomStream rng(seed);
            return plan_to_dict(dems::sample_plan(rng, level));
        },
        py::arg("seed"), py::arg("level") = 5,
        "Sample an augmentation plan (sub-strategy, ordered transforms, magnitudes)");

    m.def(
        "apply_plan",
        [](const FloatArray& image, const py::object& mask, const py::dict& plan,
           std::uint64_t seed) -> py::tuple {
            dems::SamplePair pair;
            pair.image = to_image(image);
            if (!mask.is_none()) pair.mask = to_mask(mask.cast<ByteArray>());
            dems::RandomStream rng(seed);
            const auto out = dems::apply_plan(pair, plan_from_dict(plan), rng);
            return py::make_tuple(from_image(out.image),
                                  out.mask ? py::object(from_mask(*out.mask)) : py::none());
        },
        py::arg("image"), py::arg("mask"), py::arg("plan"), py::arg("seed") = 0,
        "Apply a plan to an image (and optional mask), keeping the pair aligned");

    // ---- losses and schedule ------------------------------------------------
    m.def(
        "warmup", [](std::int64_t t, std::int64_t t_max) { return dems::warmup({t, t_max}); },
        py::arg("t"), py::arg("t_max"), "Gaussian warm-up weight");

    m.def(
        "lr_schedule",
        [](std::int64_t iteration, std::int64_t max_iterations, double base_lr) {
            dems::TrainConfig config;
            config.max_iterations = max_iterations;
            config.base_lr = base_lr;
            return dems::lr_schedule(iteration, config);
        },
        py::arg("iteration"), py::arg("max_iterations"), py::arg("base_lr") = 0.01,
        "Single-cycle cosine annealing");

    m.def(
        "fusion_loss",
        [](const DoubleArray& pred, const DoubleArray& gt) {
            return dems::fusion_loss(to_tensor64(pred), to_tensor64(gt)).item<double>();
        },
        py::arg("pred"), py::arg("gt"), "0.5 * BCE + soft Dice");
    m.def(
        "sensitivity_loss_soft",
        [](const DoubleArray& a, const DoubleArray& b) {
            return dems::sensitivity_loss_soft(to_tensor64(a), to_tensor64(b)).item<double>();
        },
        py::arg("pred_main"), py::arg("pred_aux"));
    m.def(
        "sensitivity_loss_hard",
        [](const DoubleArray& a, const DoubleArray& b, double threshold) {
            return dems::sensitivity_loss_hard(to_tensor64(a), to_tensor64(b), threshold);
        },
        py::arg("pred_main"), py::arg("pred_aux"), py::arg("threshold") = 0.5);
    m.def(
        "unsupervised_loss",
        [](const DoubleArray& a, const DoubleArray& b) {
            return dems::unsupervised_loss(to_tensor64(a), to_tensor64(b)).item<double>();
        },
        py::arg("pred_main"), py::arg("pred_aux"));

    // ---- metrics ---------------------------------------------------------------
    m.def(
        "confusion",
        [](const ByteArray& pred, const ByteArray& gt) {
            const auto c = dems::confusion(to_mask(pred), to_mask(gt));
            py::dict out;
            out["tp"] = c.tp;
            out["tn"] = c.tn;
            out["fp"] = c.fp;
            out["fn"] = c.fn;
            return out;
        },
        py::arg("pred"), py::arg("gt"));

    m.def(
        "compute_metrics",
        [](std::int64_t tp, std::int64_t tn, std::int64_t fp, std::int64_t fn) {
            return record_to_dict(dems::compute_metrics({tp, tn, fp, fn}));
        },
        py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

    m.def(
        "bland_altman",
        [](const std::vector<std::pair<ByteArray, ByteArray>>& pairs, std::int64_t canvas_area) {
            std::vector<std::pair<dems::Mask, dems::Mask>> mask_pairs;
            mask_pairs.reserve(pairs.size());
            for (const auto& [pred, gt] : pairs) {
                mask_pairs.emplace_back(to_mask(pred), to_mask(gt));
            }
            const auto stats = dems::bland_altman(mask_pairs, canvas_area);
            py::dict out;
            out["mean_diff"] = stats.mean_diff;
            out["sd_diff"] = stats.sd_diff;
            out["loa_low"] = stats.loa_low;
            out["loa_high"] = stats.loa_high;
            out["points"] = stats.points;
            return out;
        },
        py::arg("pairs"), py::arg("canvas_area") = 224 * 224,
        "Agreement stats in percent of the canvas area");

    // ---- data ---------------------------------------------------------------------
    m.def(
        "synth_generate",
        [](const std::string& root, int n, std::uint64_t seed, int height, int width) {
            dems::SynthParams params;
            params.height = height;
            params.width = width;
            dems::synth_generate(root, n, seed, params);
        },
        py::arg("root"), py::arg("n"), py::arg("seed") = 0, py::arg("height") = 224,
        py::arg("width") = 224, py::call_guard<py::gil_scoped_release>());

    m.def(
        "split_dataset",
        [](const std::string& root, int size, std::uint64_t seed, double labeled_fraction) {
            const auto dataset = dems::load_dataset(root, size, size);
            const auto spec = dems::split(dataset.manifest, seed, labeled_fraction);
            py::dict out;
            out["train"] = spec.train_ids;
            out["val"] = spec.val_ids;
            out["labeled"] = spec.labeled_ids;
            return out;
        },
        py::arg("root"), py::arg("size"), py::arg("seed"), py::arg("labeled_fraction"));

    // ---- training and evaluation -----------------------------------------------------
    m.def(
        "train",
        [](const std::string& data_root, const std::string& out_dir, double labeled_fraction,
           std::uint64_t seed, std::int64_t iterations, int channels, int size, int batch_size,
           int level, double base_lr, double momentum, double weight_decay, int lambda_period,
           int val_interval, bool oaa, bool rre, bool sensitivity_loss, bool semi_supervised) {
            dems::TrainConfig config;
            config.labeled_fraction = labeled_fraction;
            config.seed = seed;
            config.max_iterations = iterations;
            config.base_channels = channels;
            config.input_size = size;
            config.batch_size = batch_size;
            config.oaa_level = level;
            config.base_lr = base_lr;
            config.momentum = momentum;
            config.weight_decay = weight_decay;
            config.lambda_update_period = lambda_period;
            config.val_interval = val_interval;
            config.toggles = {oaa, rre, sensitivity_loss, semi_supervised};

            dems::TrainResult result;
            {
                py::gil_scoped_release release;
                result = dems::train(config, data_root, out_dir);
            }
            py::dict out;
            out["best_checkpoint"] = result.best_checkpoint.string();
            out["final_checkpoint"] = result.final_checkpoint.string();
            out["best_val_dsc"] = result.best_val_dsc;
            out["best_iteration"] = result.best_iteration;
            out["split_record"] = result.split_record.string();
            out["loss_log"] = result.loss_log.string();
            return out;
        },
        py::arg("data_root"), py::arg("out_dir"), py::arg("labeled_fraction") = 0.2,
        py::arg("seed") = 1, py::arg("iterations") = 2000, py::arg("channels") = 16,
        py::arg("size") = 224, py::arg("batch_size") = 8, py::arg("level") = 5,
        py::arg("base_lr") = 0.01, py::arg("momentum") = 0.9, py::arg("weight_decay") = 1e-4,
        py::arg("lambda_period") = 150, py::arg("val_interval") = 200, py::arg("oaa") = true,
        py::arg("rre") = true, py::arg("sensitivity_loss") = true,
        py::arg("semi_supervised") = true, "Run the full training protocol");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& data_root,
           const std::string& subset, const std::string& split_record) {
            dems::MetricReport report;
            {
                py::gil_scoped_release release;
                report = dems::evaluate(checkpoint, data_root, subset_from_name(subset),
                                        split_record);
            }
            return report_to_dict(report);
        },
        py::arg("checkpoint"), py::arg("data_root"), py::arg("subset") = "val",
        py::arg("split_record") = "");

    m.def(
        "predict",
        [](const std::string& checkpoint_path, const FloatArray& image) {
            auto checkpoint = dems::load_checkpoint(checkpoint_path);
            return from_image(dems::predict_image(checkpoint.net, to_image(image)));
        },
        py::arg("checkpoint"), py::arg("image"),
        "Eval-mode probability map for a single image");

    m.def(
        "describe",
        [](int channels) {
            dems::DemsNet net(channels);
            return net->describe();
        },
        py::arg("channels") = 16);
}
