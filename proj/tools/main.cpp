#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dems/data.hpp"
#include "dems/metrics.hpp"
#include "dems/net.hpp"
#include "dems/oaa.hpp"
#include "dems/plot.hpp"
#include "dems/train.hpp"
#include "dems/util.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "dems 0.1.0 (file formats v1)";

dems::EvalSubset parse_subset(const std::string& name) {
    if (name == "val") return dems::EvalSubset::Val;
    if (name == "train") return dems::EvalSubset::Train;
    if (name == "all") return dems::EvalSubset::All;
    if (name == "external") return dems::EvalSubset::External;
    throw CLI::ValidationError("--subset", "must be one of val, train, all, external");
}

// The split record lands next to the checkpoints, so default to it.
fs::path default_split_record(const fs::path& checkpoint, const std::string& explicit_path) {
    if (!explicit_path.empty()) return explicit_path;
    const fs::path sibling = checkpoint.parent_path() / "split.txt";
    return fs::exists(sibling) ? sibling : fs::path{};
}

void write_manifest(const fs::path& out_dir, const std::map<std::string, std::string>& entries) {
    std::ostringstream text;
    for (const auto& [key, value] : entries) text << dems::kv_line(key, value);
    dems::atomic_write_text(out_dir / "manifest.txt", text.str());
}

std::vector<std::vector<std::string>> read_csv_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv: " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!fields.empty()) rows.push_back(fields);
    }
    return rows;
}

std::string report_text(const dems::MetricReport& report, const std::string& subset) {
    std::ostringstream out;
    out << "report for subset '" << subset << "' (" << report.per_image.size() << " images)\n";
    const auto line = [&](const char* name, double mean, double sd) {
        out << name << " " << dems::format_double(mean, 4) << " +/- "
            << dems::format_double(sd, 4) << "\n";
    };
    line("dsc", report.mean.dsc, report.stddev.dsc);
    line("iou", report.mean.iou, report.stddev.iou);
    line("sen", report.mean.sen, report.stddev.sen);
    line("pre", report.mean.pre, report.stddev.pre);
    line("pa ", report.mean.pa, report.stddev.pa);
    return out.str();
}

std::string per_image_csv(const dems::MetricReport& report) {
    std::string csv = "id,dsc,iou,sen,pre,pa\n";
    for (const auto& r : report.per_image) {
        csv += dems::csv_row({r.id, dems::format_double(r.dsc, 6), dems::format_double(r.iou, 6),
                              dems::format_double(r.sen, 6), dems::format_double(r.pre, 6),
                              dems::format_double(r.pa, 6)});
    }
    return csv;
}

void render_train_plots(const dems::TrainResult& result, const fs::path& out_dir) {
    const auto rows = read_csv_file(result.loss_log);
    dems::PlotSeries fusion{"fusion", {}}, soft{"sensitivity (soft)", {}},
        unsup{"unsupervised", {}}, total{"total", {}}, lambda{"lambda", {}};
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double it = std::stod(rows[i][0]);
        lambda.points.emplace_back(it, std::stod(rows[i][1]));
        fusion.points.emplace_back(it, std::stod(rows[i][2]));
        soft.points.emplace_back(it, std::stod(rows[i][3]));
        unsup.points.emplace_back(it, std::stod(rows[i][5]));
        total.points.emplace_back(it, std::stod(rows[i][6]));
    }
    dems::atomic_write_text(out_dir / "loss_curves.svg",
                            dems::svg_line_chart({total, fusion, soft, unsup, lambda},
                                                 "training loss terms", "iteration", "loss"));

    const auto val_rows = read_csv_file(result.val_log);
    dems::PlotSeries dsc{"val dsc", {}}, iou{"val iou", {}};
    for (std::size_t i = 1; i < val_rows.size(); ++i) {
        dsc.points.emplace_back(std::stod(val_rows[i][0]), std::stod(val_rows[i][1]));
        iou.points.emplace_back(std::stod(val_rows[i][0]), std::stod(val_rows[i][2]));
    }
    dems::atomic_write_text(out_dir / "val_metrics.svg",
                            dems::svg_line_chart({dsc, iou}, "validation metrics", "iteration",
                                                 "score"));
}

// ---- subcommands -------------------------------------------------------------

struct SynthArgs {
    int n = 0;
    std::uint64_t seed = 0;
    std::string out;
    int height = 224;
    int width = 224;
};

void run_synth(const SynthArgs& args) {
    dems::SynthParams params;
    params.height = args.height;
    params.width = args.width;
    dems::synth_generate(args.out, args.n, args.seed, params);
    write_manifest(args.out, {{"command", "synth"},
                              {"n", std::to_string(args.n)},
                              {"seed", std::to_string(args.seed)},
                              {"height", std::to_string(args.height)},
                              {"width", std::to_string(args.width)}});
    std::cout << "wrote " << args.n << " image/mask pairs under " << args.out << "\n";
}

struct AugmentArgs {
    std::string data;
    std::string out;
    int level = 5;
    int count = 0;
    std::uint64_t seed = 0;
    int size = 224;
};

void run_augment(const AugmentArgs& args) {
    const auto dataset = dems::load_dataset(args.data, args.size, args.size);
    fs::create_directories(fs::path(args.out) / "images");
    fs::create_directories(fs::path(args.out) / "masks");

    dems::RandomStream rng(args.seed);
    std::ostringstream sidecar;
    for (int i = 0; i < args.count; ++i) {
        const auto& source = dataset.samples[rng.uniform_int(dataset.samples.size())];
        const auto plan = dems::sample_plan(rng, args.level);
        const auto augmented = dems::apply_plan(source, plan, rng);

        char name[32];
        std::snprintf(name, sizeof(name), "aug_%05d.png", i);
        dems::write_image_8bit(fs::path(args.out) / "images" / name, augmented.image);
        if (augmented.mask) {
            dems::write_mask_8bit(fs::path(args.out) / "masks" / name, *augmented.mask);
        }

        sidecar << "output " << name << "\n";
        sidecar << dems::kv_line("source", source.id);
        sidecar << dems::kv_line("sub_strategy", std::to_string(plan.sub_strategy));
        for (const auto& t : plan.transforms) {
            const auto& spec = dems::transform_spec(t.kind);
            sidecar << "transform " << spec.name << " magnitude "
                    << dems::format_double(t.magnitude, 5) << " "
                    << (t.apply ? "applied" : "skipped") << "\n";
        }
        sidecar << "\n";
    }
    dems::atomic_write_text(fs::path(args.out) / "plans.txt", sidecar.str());
    write_manifest(args.out, {{"command", "augment"},
                              {"data", args.data},
                              {"level", std::to_string(args.level)},
                              {"count", std::to_string(args.count)},
                              {"seed", std::to_string(args.seed)},
                              {"size", std::to_string(args.size)}});
    std::cout << "wrote " << args.count << " augmented pairs under " << args.out << "\n";
}

struct TrainArgs {
    dems::TrainConfig config;
    std::string data;
    std::string out;
    std::string config_file;
    bool describe = false;
    bool plot = false;
};

// key = value file with the TrainConfig field names; command-line and
// environment values win over file values.
void apply_config_file(TrainArgs& args, const CLI::App& cmd) {
    std::ifstream in(args.config_file);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + args.config_file);

    std::map<std::string, std::string> entries;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw CLI::ValidationError("--config", "malformed line: " + line);
        }
        auto key = line.substr(0, eq);
        auto value = line.substr(eq + 1);
        const auto trim = [](std::string& s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
        };
        trim(key);
        trim(value);
        entries[key] = value;
    }

    const auto parse_bool = [](const std::string& v) {
        if (v == "true" || v == "on" || v == "1") return true;
        if (v == "false" || v == "off" || v == "0") return false;
        throw CLI::ValidationError("--config", "not a boolean: " + v);
    };

    for (const auto& [key, value] : entries) {
        const auto overridden = [&](const char* flag) { return cmd.count(flag) > 0; };
        if (key == "base_lr") {
            if (!overridden("--base-lr")) args.config.base_lr = std::stod(value);
        } else if (key == "momentum") {
            if (!overridden("--momentum")) args.config.momentum = std::stod(value);
        } else if (key == "weight_decay") {
            if (!overridden("--weight-decay")) args.config.weight_decay = std::stod(value);
        } else if (key == "batch_size") {
            if (!overridden("--batch-size")) args.config.batch_size = std::stoi(value);
        } else if (key == "max_iterations") {
            if (!overridden("--iterations")) args.config.max_iterations = std::stoll(value);
        } else if (key == "lambda_update_period") {
            if (!overridden("--lambda-period")) {
                args.config.lambda_update_period = std::stoi(value);
            }
        } else if (key == "labeled_fraction") {
            if (!overridden("--labeled-fraction")) {
                args.config.labeled_fraction = std::stod(value);
            }
        } else if (key == "oaa_level") {
            if (!overridden("--level")) args.config.oaa_level = std::stoi(value);
        } else if (key == "seed") {
            if (!overridden("--seed")) args.config.seed = std::stoull(value);
        } else if (key == "base_channels") {
            if (!overridden("--channels")) args.config.base_channels = std::stoi(value);
        } else if (key == "input_size") {
            if (!overridden("--size")) args.config.input_size = std::stoi(value);
        } else if (key == "val_interval") {
            if (!overridden("--val-interval")) args.config.val_interval = std::stoi(value);
        } else if (key == "oaa") {
            if (!overridden("--no-oaa")) args.config.toggles.oaa = parse_bool(value);
        } else if (key == "rre") {
            if (!overridden("--no-rre")) args.config.toggles.rre = parse_bool(value);
        } else if (key == "sensitivity_loss") {
            if (!overridden("--no-sensitivity-loss")) {
                args.config.toggles.sensitivity_loss = parse_bool(value);
            }
        } else if (key == "semi_supervised") {
            if (!overridden("--supervised-only")) {
                args.config.toggles.semi_supervised = parse_bool(value);
            }
        } else if (key == "data") {
            if (args.data.empty()) args.data = value;
        } else if (key == "out") {
            if (args.out.empty()) args.out = value;
        } else {
            throw CLI::ValidationError("--config", "unknown key: " + key);
        }
    }
}

void run_train(TrainArgs& args, const CLI::App& cmd) {
    if (!args.config_file.empty()) apply_config_file(args, cmd);
    if (args.describe) {
        dems::DemsNet net(args.config.base_channels);
        std::cout << net->describe();
        return;
    }
    if (args.data.empty() || args.out.empty()) {
        throw CLI::RequiredError("--data and --out");
    }
    const auto result = dems::train(args.config, args.data, args.out);
    if (args.plot) render_train_plots(result, args.out);
    std::cout << "best validation dsc " << dems::format_double(result.best_val_dsc, 4)
              << " at iteration " << result.best_iteration << "\n"
              << "best checkpoint " << result.best_checkpoint.string() << "\n"
              << "final checkpoint " << result.final_checkpoint.string() << "\n";
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string subset = "val";
    std::string split_record;
    std::string out;
};

void run_eval(const EvalArgs& args) {
    const auto record = default_split_record(args.checkpoint, args.split_record);
    const auto report =
        dems::evaluate(args.checkpoint, args.data, parse_subset(args.subset), record);
    const auto text = report_text(report, args.subset);
    std::cout << text;
    if (!args.out.empty()) {
        fs::create_directories(args.out);
        dems::atomic_write_text(fs::path(args.out) / "report.txt", text);
        dems::atomic_write_text(fs::path(args.out) / "per_image.csv", per_image_csv(report));
        write_manifest(args.out, {{"command", "eval"},
                                  {"checkpoint", args.checkpoint},
                                  {"data", args.data},
                                  {"subset", args.subset},
                                  {"split_record", record.string()}});
    }
}

struct BlandAltmanArgs {
    std::string checkpoint;
    std::string data;
    std::string subset = "val";
    std::string split_record;
    std::string out;
    std::int64_t canvas_area = 224 * 224;
    bool plot = false;
};

void run_bland_altman(const BlandAltmanArgs& args) {
    const auto record = default_split_record(args.checkpoint, args.split_record);
    const auto pairs =
        dems::predict_masks(args.checkpoint, args.data, parse_subset(args.subset), record);

    std::vector<std::pair<dems::Mask, dems::Mask>> mask_pairs;
    mask_pairs.reserve(pairs.size());
    for (const auto& p : pairs) mask_pairs.emplace_back(p.pred, p.gt);
    const auto stats = dems::bland_altman(mask_pairs, args.canvas_area);

    std::ostringstream text;
    text << dems::kv_line("pairs", std::to_string(pairs.size()));
    text << dems::kv_line("canvas_area", std::to_string(args.canvas_area));
    text << dems::kv_line("mean_diff_percent", dems::format_double(stats.mean_diff, 6));
    text << dems::kv_line("sd_percent", dems::format_double(stats.sd_diff, 6));
    text << dems::kv_line("loa_low_percent", dems::format_double(stats.loa_low, 6));
    text << dems::kv_line("loa_high_percent", dems::format_double(stats.loa_high, 6));
    std::cout << text.str();

    fs::create_directories(args.out);
    dems::atomic_write_text(fs::path(args.out) / "agreement.txt", text.str());

    std::string csv = "id,mean_percent,diff_percent\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        csv += dems::csv_row({pairs[i].id, dems::format_double(stats.points[i].first, 6),
                              dems::format_double(stats.points[i].second, 6)});
    }
    dems::atomic_write_text(fs::path(args.out) / "points.csv", csv);

    if (args.plot) {
        dems::atomic_write_text(
            fs::path(args.out) / "scatter.svg",
            dems::svg_agreement_scatter(stats.points, stats.mean_diff, stats.loa_low,
                                        stats.loa_high, "Bland-Altman agreement"));
    }
    write_manifest(args.out, {{"command", "bland-altman"},
                              {"checkpoint", args.checkpoint},
                              {"data", args.data},
                              {"subset", args.subset},
                              {"split_record", record.string()},
                              {"canvas_area", std::to_string(args.canvas_area)}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised binary segmentation: training, evaluation and analysis"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic ultrasound-like dataset");
    synth->add_option("--n", synth_args.n, "Number of image/mask pairs")
        ->required()
        ->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_args.seed, "Generator seed")->envname("DEMS_SEED");
    synth->add_option("--out", synth_args.out, "Output dataset root")->required();
    synth->add_option("--height", synth_args.height)->check(CLI::PositiveNumber);
    synth->add_option("--width", synth_args.width)->check(CLI::PositiveNumber);
    synth->callback([&] { run_synth(synth_args); });

    AugmentArgs augment_args;
    auto* augment =
        app.add_subcommand("augment", "Write augmented samples for visual inspection");
    augment->add_option("--data", augment_args.data, "Dataset root")->required();
    augment->add_option("--level", augment_args.level, "Augmentation level 1..5")
        ->check(CLI::Range(1, 5));
    augment->add_option("--count", augment_args.count, "Number of augmented pairs")
        ->required()
        ->check(CLI::PositiveNumber);
    augment->add_option("--seed", augment_args.seed)->envname("DEMS_SEED");
    augment->add_option("--out", augment_args.out, "Output directory")->required();
    augment->add_option("--size", augment_args.size, "Working resolution")
        ->check(CLI::PositiveNumber);
    augment->callback([&] { run_augment(augment_args); });

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train the segmentation network");
    train->add_option("--config", train_args.config_file,
                      "Config file (key = value) with the TrainConfig field names");
    train->add_option("--data", train_args.data, "Dataset root")->envname("DEMS_DATA");
    train->add_option("--out", train_args.out, "Run output directory")->envname("DEMS_OUT");
    train->add_option("--labeled-fraction", train_args.config.labeled_fraction)
        ->envname("DEMS_LABELED_FRACTION");
    train->add_option("--seed", train_args.config.seed)->envname("DEMS_SEED");
    train->add_option("--iterations", train_args.config.max_iterations)
        ->envname("DEMS_ITERATIONS");
    train->add_option("--channels", train_args.config.base_channels)->envname("DEMS_CHANNELS");
    train->add_option("--size", train_args.config.input_size)->envname("DEMS_SIZE");
    train->add_option("--batch-size", train_args.config.batch_size)->envname("DEMS_BATCH_SIZE");
    train->add_option("--level", train_args.config.oaa_level)->envname("DEMS_LEVEL");
    train->add_option("--base-lr", train_args.config.base_lr)->envname("DEMS_BASE_LR");
    train->add_option("--momentum", train_args.config.momentum)->envname("DEMS_MOMENTUM");
    train->add_option("--weight-decay", train_args.config.weight_decay)
        ->envname("DEMS_WEIGHT_DECAY");
    train->add_option("--lambda-period", train_args.config.lambda_update_period)
        ->envname("DEMS_LAMBDA_PERIOD");
    train->add_option("--val-interval", train_args.config.val_interval)
        ->envname("DEMS_VAL_INTERVAL");
    train->add_flag("--no-oaa{false}", train_args.config.toggles.oaa,
                    "Replace the online augmenter with random flip + rotation");
    train->add_flag("--no-rre{false}", train_args.config.toggles.rre,
                    "Bypass the RRE blocks (raw features to auxiliary decoders)");
    train->add_flag("--no-sensitivity-loss{false}", train_args.config.toggles.sensitivity_loss,
                    "Drop the sensitivity term from the objective");
    train->add_flag("--supervised-only{false}", train_args.config.toggles.semi_supervised,
                    "Ignore unlabeled images and train on labeled batches only");
    train->add_flag("--describe", train_args.describe,
                    "Print the architecture summary and parameter count, then exit");
    train->add_flag("--plot", train_args.plot, "Render loss/validation SVG charts");
    train->callback([&] { run_train(train_args, *train); });

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", eval_args.checkpoint)->required();
    eval->add_option("--data", eval_args.data, "Dataset root")->required();
    eval->add_option("--subset", eval_args.subset, "val, train, all or external");
    eval->add_option("--split-record", eval_args.split_record,
                     "Split record path (defaults to split.txt beside the checkpoint)");
    eval->add_option("--out", eval_args.out, "Optional report output directory");
    eval->callback([&] { run_eval(eval_args); });

    BlandAltmanArgs ba_args;
    auto* ba = app.add_subcommand("bland-altman", "Agreement analysis of object sizes");
    ba->add_option("--checkpoint", ba_args.checkpoint)->required();
    ba->add_option("--data", ba_args.data, "Dataset root")->required();
    ba->add_option("--subset", ba_args.subset, "val, train, all or external");
    ba->add_option("--split-record", ba_args.split_record);
    ba->add_option("--out", ba_args.out, "Output directory")->required();
    ba->add_option("--canvas-area", ba_args.canvas_area, "Pixel-count normalizer")
        ->check(CLI::PositiveNumber);
    ba->add_flag("--plot", ba_args.plot, "Render the scatter SVG");
    ba->callback([&] { run_bland_altman(ba_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
