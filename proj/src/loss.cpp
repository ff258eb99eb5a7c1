#include "dems/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace dems {

namespace {

constexpr double kClampEps = 1e-7;

void require_same_sizes(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.defined() || !b.defined()) {
        throw std::invalid_argument(std::string(what) + ": undefined tensor");
    }
    if (!a.sizes().equals(b.sizes())) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

}  // namespace

double warmup(const WarmupClock& clock) {
    if (clock.t < 0 || clock.t_max < 0) {
        throw std::invalid_argument("warmup: negative clock values");
    }
    if (clock.t_max == 0) return 1.0;
    if (clock.t > clock.t_max) throw std::invalid_argument("warmup: t exceeds t_max");
    const double r = 1.0 - static_cast<double>(clock.t) / static_cast<double>(clock.t_max);
    return std::exp(-5.0 * r * r);
}

torch::Tensor fusion_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
    require_same_sizes(pred, gt, "fusion_loss");
    if (!(gt.eq(0).logical_or(gt.eq(1))).all().item<bool>()) {
        throw std::invalid_argument("fusion_loss: ground truth is not binary");
    }
    const auto p = pred.clamp(kClampEps, 1.0 - kClampEps);
    const auto g = gt.to(pred.scalar_type());
    const auto bce = -(g * p.log() + (1.0 - g) * (1.0 - p).log()).mean();
    const auto dice = 1.0 - 2.0 * (p * g).sum() / (p.sum() + g.sum());
    return 0.5 * bce + dice;
}

double sensitivity_loss_hard(const torch::Tensor& pred_main, const torch::Tensor& pred_aux,
                             double threshold) {
    require_same_sizes(pred_main, pred_aux, "sensitivity_loss_hard");
    torch::NoGradGuard no_grad;
    const auto bm = pred_main.gt(threshold);
    const auto ba = pred_aux.gt(threshold);
    return bm.ne(ba).to(torch::kDouble).mean().item<double>();
}

torch::Tensor sensitivity_loss_soft(const torch::Tensor& pred_main,
                                    const torch::Tensor& pred_aux) {
    require_same_sizes(pred_main, pred_aux, "sensitivity_loss_soft");
    return (pred_main + pred_aux - 2.0 * pred_main * pred_aux).mean();
}

torch::Tensor unsupervised_loss(const torch::Tensor& pred_main, const torch::Tensor& pred_aux) {
    require_same_sizes(pred_main, pred_aux, "unsupervised_loss");
    return (pred_main - pred_aux).pow(2).mean();
}

LossBreakdown total_loss(const std::vector<std::pair<DecoderMaps, torch::Tensor>>& labeled,
                         const std::vector<DecoderMaps>& unlabeled, const WarmupClock& clock,
                         bool include_sensitivity) {
    if (labeled.empty() && unlabeled.empty()) {
        throw std::invalid_argument("total_loss: no samples");
    }
    for (const auto& [maps, gt] : labeled) {
        if (!gt.defined()) throw std::invalid_argument("total_loss: labeled sample without gt");
        if (maps.aux.size() != 3) {
            throw std::invalid_argument("total_loss: expected three auxiliary maps");
        }
    }
    for (const auto& maps : unlabeled) {
        if (maps.aux.size() != 3) {
            throw std::invalid_argument("total_loss: expected three auxiliary maps");
        }
    }

    const auto opts = torch::TensorOptions().dtype(
        labeled.empty() ? unlabeled.front().main.scalar_type()
                        : labeled.front().first.main.scalar_type());

    LossBreakdown breakdown;
    breakdown.lambda = warmup(clock);

    auto fusion_sum = torch::zeros({}, opts);
    auto soft_sum = torch::zeros({}, opts);
    double hard_sum = 0.0;
    auto unsup_sum = torch::zeros({}, opts);

    for (const auto& [maps, gt] : labeled) {
        fusion_sum = fusion_sum + fusion_loss(maps.main, gt);
        for (const auto& aux : maps.aux) {
            fusion_sum = fusion_sum + fusion_loss(aux, gt);
            soft_sum = soft_sum + sensitivity_loss_soft(maps.main, aux);
            hard_sum += sensitivity_loss_hard(maps.main, aux);
        }
    }
    for (const auto& maps : unlabeled) {
        for (const auto& aux : maps.aux) {
            unsup_sum = unsup_sum + unsupervised_loss(maps.main, aux);
        }
    }

    auto fusion_mean = torch::zeros({}, opts);
    auto soft_mean = torch::zeros({}, opts);
    auto unsup_mean = torch::zeros({}, opts);
    if (!labeled.empty()) {
        const auto n = static_cast<double>(labeled.size());
        fusion_mean = fusion_sum / (4.0 * n);
        soft_mean = soft_sum / (3.0 * n);
        breakdown.sensitivity_hard_mean = hard_sum / (3.0 * n);
    }
    if (!unlabeled.empty()) {
        unsup_mean = unsup_sum / (3.0 * static_cast<double>(unlabeled.size()));
    }

    auto pair_terms = include_sensitivity ? soft_mean + unsup_mean : unsup_mean;
    breakdown.total_tensor = fusion_mean + breakdown.lambda * pair_terms;
    breakdown.fusion_mean = fusion_mean.item<double>();
    breakdown.sensitivity_soft_mean = soft_mean.item<double>();
    breakdown.unsupervised_mean = unsup_mean.item<double>();
    breakdown.total =
        breakdown.fusion_mean +
        breakdown.lambda * ((include_sensitivity ? breakdown.sensitivity_soft_mean : 0.0) +
                            breakdown.unsupervised_mean);
    return breakdown;
}

}  // namespace dems
