#ifndef DEMS_LOSS_HPP
#define DEMS_LOSS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace dems {

// Counter driving the Gaussian warm-up; t advances once per
// lambda_update_period iterations.
struct WarmupClock {
    std::int64_t t = 0;
    std::int64_t t_max = 0;
};

// 1 when t_max == 0, else exp(-5 (1 - t/t_max)^2). Throws when t is outside
// [0, t_max].
double warmup(const WarmupClock& clock);

// 0.5 * BCE + soft Dice on a single probability map. pred is clamped to
// [1e-7, 1 - 1e-7] before the logarithms; gt must be binary. BCE is the pixel
// mean; Dice uses soft sums over all pixels with no smoothing constant, so an
// empty ground truth yields a Dice term of 1.
torch::Tensor fusion_loss(const torch::Tensor& pred, const torch::Tensor& gt);

// Fraction of pixels whose binarized predictions disagree. Piecewise constant
// in its inputs; used for monitoring, not optimization.
double sensitivity_loss_hard(const torch::Tensor& pred_main, const torch::Tensor& pred_aux,
                             double threshold = 0.5);

// Differentiable surrogate mean(pm + pa - 2 pm pa); coincides with the hard
// form whenever both inputs are already binary.
torch::Tensor sensitivity_loss_soft(const torch::Tensor& pred_main,
                                    const torch::Tensor& pred_aux);

// Mean squared error between two probability maps.
torch::Tensor unsupervised_loss(const torch::Tensor& pred_main, const torch::Tensor& pred_aux);

// Per-sample decoder outputs: the main map and the three auxiliary maps.
struct DecoderMaps {
    torch::Tensor main;
    std::vector<torch::Tensor> aux;
};

struct LossBreakdown {
    torch::Tensor total_tensor;       // scalar for backward
    double total = 0.0;               // fusion + lambda * (soft + unsupervised), in doubles
    double fusion_mean = 0.0;         // mean over 4 decoders x labeled samples
    double sensitivity_soft_mean = 0.0;
    double sensitivity_hard_mean = 0.0;
    double unsupervised_mean = 0.0;
    double lambda = 0.0;
};

// Combines the three terms per the decoder/pair averaging rules: fusion over
// all four decoders on labeled samples, soft sensitivity over the three
// main-aux pairs on labeled samples, unsupervised MSE over the three pairs on
// unlabeled samples; total = fusion + lambda * (sensitivity + unsupervised).
// Missing groups contribute zero. When include_sensitivity is false the
// sensitivity term is logged but dropped from the total (ablation toggle).
LossBreakdown total_loss(const std::vector<std::pair<DecoderMaps, torch::Tensor>>& labeled,
                         const std::vector<DecoderMaps>& unlabeled, const WarmupClock& clock,
                         bool include_sensitivity = true);

}  // namespace dems

#endif
