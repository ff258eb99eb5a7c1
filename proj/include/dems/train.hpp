#ifndef DEMS_TRAIN_HPP
#define DEMS_TRAIN_HPP

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "dems/data.hpp"
#include "dems/metrics.hpp"
#include "dems/net.hpp"
#include "dems/rng.hpp"

namespace dems {

struct TrainToggles {
    bool oaa = true;
    bool rre = true;
    bool sensitivity_loss = true;
    // When false the unlabeled pool is ignored and batches are fully labeled
    // (the supervised baseline of the ablation grid).
    bool semi_supervised = true;
};

struct TrainConfig {
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 8;
    std::int64_t max_iterations = 2000;
    int lambda_update_period = 150;
    double labeled_fraction = 0.2;
    int oaa_level = 5;
    TrainToggles toggles;
    std::uint64_t seed = 1;
    int base_channels = 16;
    int input_size = 224;
    int val_interval = 200;

    void validate() const;  // throws std::invalid_argument on violations
};

// Single-cycle cosine annealing: base_lr * 0.5 * (1 + cos(pi * it / max_it)).
double lr_schedule(std::int64_t iteration, const TrainConfig& config);

// Reshuffled-epoch drawing from a fixed pool: every element is seen exactly
// once per epoch, with a fresh shuffle at each epoch boundary.
class EpochSampler {
public:
    explicit EpochSampler(std::vector<int> indices);

    int next(RandomStream& rng);
    std::size_t pool_size() const { return indices_.size(); }

private:
    std::vector<int> indices_;
    std::size_t cursor_ = 0;
};

struct TrainResult {
    std::filesystem::path best_checkpoint;
    std::filesystem::path final_checkpoint;
    double best_val_dsc = 0.0;
    std::int64_t best_iteration = -1;
    std::filesystem::path split_record;
    std::filesystem::path loss_log;
    std::filesystem::path val_log;
};

// Runs the full semi-supervised protocol: 7:3 split, labeled-subset
// selection, 4+4 labeled/unlabeled batches with online augmentation, SGD with
// cosine annealing, warm-up clock updates every lambda_update_period
// iterations, periodic validation with best-DSC checkpointing, and the
// per-iteration loss log. Throws TrainDiverged on a non-finite loss.
TrainResult train(const TrainConfig& config, const std::filesystem::path& data_root,
                  const std::filesystem::path& out_dir);

struct TrainDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EvalSubset { Val, Train, All, External };

// Evaluates a checkpoint: eval-mode forward (main decoder, FPI identity),
// binarization at 0.5, per-image metrics. Val/Train subsets require the split
// record written by train; External verifies that no identifier is shared
// with the training split when a record is supplied. A nonzero
// expected_input_size must match the checkpoint's stored input size.
MetricReport evaluate(const std::filesystem::path& checkpoint_path,
                      const std::filesystem::path& data_root, EvalSubset subset,
                      const std::filesystem::path& split_record = {},
                      int expected_input_size = 0);

// Same selection rules as evaluate, returning binarized predictions next to
// their ground truth, ordered by identifier; feeds the Bland-Altman analysis.
struct PredictedPair {
    std::string id;
    Mask pred;
    Mask gt;
};

std::vector<PredictedPair> predict_masks(const std::filesystem::path& checkpoint_path,
                                         const std::filesystem::path& data_root,
                                         EvalSubset subset,
                                         const std::filesystem::path& split_record = {});

// Eval-mode prediction for already-loaded samples; exposed for reuse by the
// validation loop and the python bindings.
MetricReport evaluate_samples(DemsNet& net, const std::vector<SamplePair>& samples);
Image predict_image(DemsNet& net, const Image& image);

}  // namespace dems

#endif
