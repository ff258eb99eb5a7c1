#include "dems/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dems/bridge.hpp"
#include "dems/loss.hpp"
#include "dems/oaa.hpp"
#include "dems/util.hpp"

namespace dems {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw std::invalid_argument("batch_size must be even and >= 2");
    }
    if (max_iterations < lambda_update_period) {
        throw std::invalid_argument("max_iterations must be >= lambda_update_period");
    }
    if (lambda_update_period < 1) {
        throw std::invalid_argument("lambda_update_period must be >= 1");
    }
    if (oaa_level < 1 || oaa_level > 5) {
        throw std::invalid_argument("oaa_level must be in 1..5");
    }
    if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0) {
        throw std::invalid_argument("labeled_fraction must be in (0, 1]");
    }
    if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
    if (input_size < 16 || input_size % 16 != 0) {
        throw std::invalid_argument("input_size must be a positive multiple of 16");
    }
    if (val_interval < 1) throw std::invalid_argument("val_interval must be >= 1");
    if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be > 0");
}

double lr_schedule(std::int64_t iteration, const TrainConfig& config) {
    if (iteration < 0 || iteration > config.max_iterations) {
        throw std::invalid_argument("lr_schedule: iteration outside [0, max_iterations]");
    }
    const double progress =
        static_cast<double>(iteration) / static_cast<double>(config.max_iterations);
    return config.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

EpochSampler::EpochSampler(std::vector<int> indices) : indices_(std::move(indices)) {
    if (indices_.empty()) throw std::invalid_argument("EpochSampler: empty pool");
    cursor_ = indices_.size();  // force a shuffle on first draw
}

int EpochSampler::next(RandomStream& rng) {
    if (cursor_ >= indices_.size()) {
        rng.shuffle(indices_);
        cursor_ = 0;
    }
    return indices_[cursor_++];
}

namespace {

struct NamedStreams {
    RandomStream augmentation;
    RandomStream perturbation;
    RandomStream batching;

    explicit NamedStreams(std::uint64_t seed)
        : augmentation(seed * 6364136223846793005ULL + 1),
          perturbation(seed * 6364136223846793005ULL + 2),
          batching(seed * 6364136223846793005ULL + 3) {}
};

torch::Tensor batch_to_tensor(const std::vector<Image>& images) {
    const auto n = static_cast<std::int64_t>(images.size());
    auto batch = torch::empty({n, 1, images[0].height, images[0].width}, torch::kFloat32);
    for (std::int64_t i = 0; i < n; ++i) {
        batch[i][0] = image_to_tensor(images[i]);
    }
    return batch;
}

std::string manifest_text(const TrainConfig& config, const fs::path& data_root,
                          const fs::path& out_dir, const SplitSpec& split_spec) {
    std::ostringstream out;
    out << kv_line("command", "train");
    out << kv_line("data_root", data_root.string());
    out << kv_line("out_dir", out_dir.string());
    out << kv_line("base_lr", format_double(config.base_lr, 6));
    out << kv_line("momentum", format_double(config.momentum, 6));
    out << kv_line("weight_decay", format_double(config.weight_decay, 8));
    out << kv_line("batch_size", std::to_string(config.batch_size));
    out << kv_line("max_iterations", std::to_string(config.max_iterations));
    out << kv_line("lambda_update_period", std::to_string(config.lambda_update_period));
    out << kv_line("labeled_fraction", format_double(config.labeled_fraction, 6));
    out << kv_line("oaa_level", std::to_string(config.oaa_level));
    out << kv_line("oaa", config.toggles.oaa ? "on" : "off");
    out << kv_line("rre", config.toggles.rre ? "on" : "off");
    out << kv_line("sensitivity_loss", config.toggles.sensitivity_loss ? "on" : "off");
    out << kv_line("semi_supervised", config.toggles.semi_supervised ? "on" : "off");
    out << kv_line("seed", std::to_string(config.seed));
    out << kv_line("base_channels", std::to_string(config.base_channels));
    out << kv_line("input_size", std::to_string(config.input_size));
    out << kv_line("val_interval", std::to_string(config.val_interval));
    out << kv_line("train_count", std::to_string(split_spec.train_ids.size()));
    out << kv_line("val_count", std::to_string(split_spec.val_ids.size()));
    out << kv_line("labeled_count", std::to_string(split_spec.labeled_ids.size()));
    return out.str();
}

}  // namespace

Image predict_image(DemsNet& net, const Image& image) {
    torch::NoGradGuard no_grad;
    const bool was_training = net->is_training();
    net->eval();
    auto input = image_to_tensor(image).unsqueeze(0).unsqueeze(0);
    auto result = net->forward(input);
    net->train(was_training);
    return tensor_to_image(result.main[0][0]);
}

MetricReport evaluate_samples(DemsNet& net, const std::vector<SamplePair>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate_samples: no samples");
    std::vector<MetricRecord> records;
    records.reserve(samples.size());
    for (const auto& sample : samples) {
        if (!sample.mask) {
            throw std::invalid_argument("evaluate_samples: sample without mask: " + sample.id);
        }
        const Image prob = predict_image(net, sample.image);
        auto record = compute_metrics(confusion(binarize(prob), *sample.mask));
        record.id = sample.id;
        records.push_back(record);
    }
    return make_report(std::move(records));
}

TrainResult train(const TrainConfig& config, const fs::path& data_root, const fs::path& out_dir) {
    config.validate();
    fs::create_directories(out_dir);

    auto dataset = load_dataset(data_root, config.input_size, config.input_size);
    const SplitSpec split_spec = split(dataset.manifest, config.seed, config.labeled_fraction);

    TrainResult result;
    result.split_record = out_dir / "split.txt";
    result.loss_log = out_dir / "losses.csv";
    result.val_log = out_dir / "val_metrics.csv";
    result.best_checkpoint = out_dir / "best.ckpt";
    result.final_checkpoint = out_dir / "final.ckpt";
    save_split(result.split_record, split_spec);
    atomic_write_text(out_dir / "manifest.txt",
                      manifest_text(config, data_root, out_dir, split_spec));

    // Index samples by id and build the three pools.
    std::map<std::string, int> index_by_id;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        index_by_id[dataset.samples[i].id] = static_cast<int>(i);
    }
    const std::set<std::string> labeled_set(split_spec.labeled_ids.begin(),
                                            split_spec.labeled_ids.end());
    std::vector<int> labeled_pool, unlabeled_pool, val_pool;
    for (const auto& id : split_spec.train_ids) {
        (labeled_set.count(id) ? labeled_pool : unlabeled_pool).push_back(index_by_id.at(id));
    }
    for (const auto& id : split_spec.val_ids) val_pool.push_back(index_by_id.at(id));
    if (labeled_pool.empty()) throw std::invalid_argument("train: empty labeled pool");

    const bool use_unlabeled = config.toggles.semi_supervised && !unlabeled_pool.empty();
    const int labeled_per_batch = use_unlabeled ? config.batch_size / 2 : config.batch_size;
    const int unlabeled_per_batch = use_unlabeled ? config.batch_size / 2 : 0;

    NamedStreams streams(config.seed);
    torch::manual_seed(config.seed);
    DemsNet net(config.base_channels);
    net->train(true);

    torch::optim::SGD optimizer(net->parameters(), torch::optim::SGDOptions(config.base_lr)
                                                       .momentum(config.momentum)
                                                       .weight_decay(config.weight_decay));

    EpochSampler labeled_sampler(labeled_pool);
    auto unlabeled_sampler =
        use_unlabeled ? std::optional<EpochSampler>(EpochSampler(unlabeled_pool)) : std::nullopt;

    std::vector<SamplePair> val_samples;
    for (int idx : val_pool) val_samples.push_back(dataset.samples[idx]);

    std::ostringstream loss_csv;
    loss_csv << "iteration,lambda,fusion,sensitivity_soft,sensitivity_hard,unsupervised,total,lr\n";
    std::ostringstream val_csv;
    val_csv << "iteration,dsc,iou,sen,pre,pa\n";

    const WarmupClock clock_template{0, config.max_iterations / config.lambda_update_period};

    auto flush_logs = [&]() {
        atomic_write_text(result.loss_log, loss_csv.str());
        atomic_write_text(result.val_log, val_csv.str());
    };

    auto augment = [&](const SamplePair& sample) -> SamplePair {
        if (config.toggles.oaa) {
            const auto plan = sample_plan(streams.augmentation, config.oaa_level);
            return apply_plan(sample, plan, streams.augmentation);
        }
        return apply_flip_rotate(sample, streams.augmentation);
    };

    for (std::int64_t iteration = 0; iteration < config.max_iterations; ++iteration) {
        const double lr = lr_schedule(iteration, config);
        static_cast<torch::optim::SGDOptions&>(optimizer.param_groups()[0].options()).lr(lr);

        // Compose the batch: labeled first, then unlabeled.
        std::vector<Image> images;
        std::vector<torch::Tensor> gts;
        for (int i = 0; i < labeled_per_batch; ++i) {
            const auto& sample = dataset.samples[labeled_sampler.next(streams.batching)];
            auto augmented = augment(sample);
            images.push_back(std::move(augmented.image));
            gts.push_back(mask_to_tensor(*augmented.mask));
        }
        for (int i = 0; i < unlabeled_per_batch; ++i) {
            const auto& sample = dataset.samples[unlabeled_sampler->next(streams.batching)];
            auto augmented = augment(sample);
            images.push_back(std::move(augmented.image));
        }

        auto batch = batch_to_tensor(images);
        auto outputs = net->forward(batch, &streams.perturbation, config.toggles.rre);

        std::vector<std::pair<DecoderMaps, torch::Tensor>> labeled_maps;
        std::vector<DecoderMaps> unlabeled_maps;
        for (int i = 0; i < labeled_per_batch; ++i) {
            DecoderMaps maps;
            maps.main = outputs.main[i][0];
            for (const auto& aux : outputs.aux) maps.aux.push_back(aux[i][0]);
            labeled_maps.emplace_back(std::move(maps), gts[i]);
        }
        for (int i = labeled_per_batch; i < labeled_per_batch + unlabeled_per_batch; ++i) {
            DecoderMaps maps;
            maps.main = outputs.main[i][0];
            for (const auto& aux : outputs.aux) maps.aux.push_back(aux[i][0]);
            unlabeled_maps.push_back(std::move(maps));
        }

        WarmupClock clock = clock_template;
        clock.t = iteration / config.lambda_update_period;
        const auto breakdown =
            total_loss(labeled_maps, unlabeled_maps, clock, config.toggles.sensitivity_loss);

        if (!std::isfinite(breakdown.total)) {
            std::ostringstream snapshot;
            snapshot << "non-finite loss at iteration " << iteration << "\n"
                     << kv_line("lr", format_double(lr, 8))
                     << kv_line("lambda", format_double(breakdown.lambda, 8))
                     << kv_line("fusion", format_double(breakdown.fusion_mean, 8))
                     << kv_line("sensitivity_soft",
                                format_double(breakdown.sensitivity_soft_mean, 8))
                     << kv_line("sensitivity_hard",
                                format_double(breakdown.sensitivity_hard_mean, 8))
                     << kv_line("unsupervised", format_double(breakdown.unsupervised_mean, 8))
                     << kv_line("total", format_double(breakdown.total, 8));
            atomic_write_text(out_dir / "diverged.txt", snapshot.str());
            flush_logs();
            throw TrainDiverged(snapshot.str());
        }

        optimizer.zero_grad();
        breakdown.total_tensor.backward();
        optimizer.step();

        loss_csv << iteration << ',' << format_double(breakdown.lambda, 8) << ','
                 << format_double(breakdown.fusion_mean, 8) << ','
                 << format_double(breakdown.sensitivity_soft_mean, 8) << ','
                 << format_double(breakdown.sensitivity_hard_mean, 8) << ','
                 << format_double(breakdown.unsupervised_mean, 8) << ','
                 << format_double(breakdown.total, 8) << ',' << format_double(lr, 8) << "\n";

        const bool last = iteration + 1 == config.max_iterations;
        if ((iteration + 1) % config.val_interval == 0 || last) {
            const auto report = evaluate_samples(net, val_samples);
            net->train(true);
            val_csv << iteration + 1 << ',' << format_double(report.mean.dsc, 6) << ','
                    << format_double(report.mean.iou, 6) << ','
                    << format_double(report.mean.sen, 6) << ','
                    << format_double(report.mean.pre, 6) << ','
                    << format_double(report.mean.pa, 6) << "\n";
            if (report.mean.dsc > result.best_val_dsc || result.best_iteration < 0) {
                result.best_val_dsc = report.mean.dsc;
                result.best_iteration = iteration + 1;
                save_checkpoint(result.best_checkpoint, net,
                                CheckpointMeta{config.base_channels, config.input_size,
                                               static_cast<std::int64_t>(config.seed),
                                               iteration + 1});
            }
        }
    }

    save_checkpoint(result.final_checkpoint, net,
                    CheckpointMeta{config.base_channels, config.input_size,
                                   static_cast<std::int64_t>(config.seed),
                                   config.max_iterations});
    flush_logs();
    return result;
}

namespace {

std::vector<SamplePair> select_subset(const LoadedDataset& dataset, EvalSubset subset,
                                      const fs::path& split_record) {
    if (subset == EvalSubset::All || subset == EvalSubset::External) {
        auto samples = dataset.samples;
        if (subset == EvalSubset::External && !split_record.empty()) {
            const auto spec = load_split(split_record);
            const std::set<std::string> train_ids(spec.train_ids.begin(), spec.train_ids.end());
            for (const auto& sample : samples) {
                if (train_ids.count(sample.id)) {
                    throw std::runtime_error(
                        "external evaluation shares identifiers with the training split: " +
                        sample.id);
                }
            }
        }
        return samples;
    }

    if (split_record.empty()) {
        throw std::invalid_argument("val/train evaluation requires a split record");
    }
    const auto spec = load_split(split_record);
    const auto& ids = subset == EvalSubset::Val ? spec.val_ids : spec.train_ids;
    const std::set<std::string> wanted(ids.begin(), ids.end());
    std::vector<SamplePair> samples;
    for (const auto& sample : dataset.samples) {
        if (wanted.count(sample.id)) samples.push_back(sample);
    }
    if (samples.empty()) {
        throw std::runtime_error("no dataset entries match the requested split subset");
    }
    return samples;
}

}  // namespace

MetricReport evaluate(const fs::path& checkpoint_path, const fs::path& data_root,
                      EvalSubset subset, const fs::path& split_record, int expected_input_size) {
    auto checkpoint = load_checkpoint(checkpoint_path);
    if (expected_input_size > 0 && expected_input_size != checkpoint.meta.input_size) {
        throw std::invalid_argument(
            "resolution mismatch: checkpoint input_size is " +
            std::to_string(checkpoint.meta.input_size) + ", requested " +
            std::to_string(expected_input_size));
    }
    const int size = static_cast<int>(checkpoint.meta.input_size);
    auto dataset = load_dataset(data_root, size, size);
    auto samples = select_subset(dataset, subset, split_record);
    return evaluate_samples(checkpoint.net, samples);
}

std::vector<PredictedPair> predict_masks(const fs::path& checkpoint_path,
                                         const fs::path& data_root, EvalSubset subset,
                                         const fs::path& split_record) {
    auto checkpoint = load_checkpoint(checkpoint_path);
    const int size = static_cast<int>(checkpoint.meta.input_size);
    auto dataset = load_dataset(data_root, size, size);
    auto samples = select_subset(dataset, subset, split_record);
    std::vector<PredictedPair> pairs;
    pairs.reserve(samples.size());
    for (const auto& sample : samples) {
        if (!sample.mask) {
            throw std::invalid_argument("predict_masks: sample without mask: " + sample.id);
        }
        pairs.push_back(
            {sample.id, binarize(predict_image(checkpoint.net, sample.image)), *sample.mask});
    }
    return pairs;
}

}  // namespace dems
