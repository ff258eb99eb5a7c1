#include "dems/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace dems {

namespace {

double ratio_or_degenerate(std::int64_t num, std::int64_t den, bool both_empty) {
    if (den == 0) return both_empty ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
    require_same_shape(pred.height, pred.width, gt.height, gt.width, "confusion");
    ConfusionCounts counts;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        if (p && g) {
            ++counts.tp;
        } else if (!p && !g) {
            ++counts.tn;
        } else if (p) {
            ++counts.fp;
        } else {
            ++counts.fn;
        }
    }
    return counts;
}

MetricRecord compute_metrics(const ConfusionCounts& c) {
    const bool both_empty = (c.tp + c.fp == 0) && (c.tp + c.fn == 0);
    MetricRecord r;
    r.dsc = ratio_or_degenerate(2 * c.tp, 2 * c.tp + c.fp + c.fn, both_empty);
    r.iou = ratio_or_degenerate(c.tp, c.tp + c.fp + c.fn, both_empty);
    r.sen = ratio_or_degenerate(c.tp, c.tp + c.fn, c.tp + c.fp == 0);
    r.pre = ratio_or_degenerate(c.tp, c.tp + c.fp, c.tp + c.fn == 0);
    r.pa = ratio_or_degenerate(c.tp + c.tn, c.total(), true);
    return r;
}

MetricReport make_report(std::vector<MetricRecord> records) {
    if (records.empty()) throw std::invalid_argument("make_report: no records");
    MetricReport report;
    const double n = static_cast<double>(records.size());
    for (const auto& r : records) {
        report.mean.dsc += r.dsc;
        report.mean.iou += r.iou;
        report.mean.sen += r.sen;
        report.mean.pre += r.pre;
        report.mean.pa += r.pa;
    }
    report.mean.dsc /= n;
    report.mean.iou /= n;
    report.mean.sen /= n;
    report.mean.pre /= n;
    report.mean.pa /= n;
    for (const auto& r : records) {
        const double dd = r.dsc - report.mean.dsc;
        const double di = r.iou - report.mean.iou;
        const double ds = r.sen - report.mean.sen;
        const double dp = r.pre - report.mean.pre;
        const double da = r.pa - report.mean.pa;
        report.stddev.dsc += dd * dd;
        report.stddev.iou += di * di;
        report.stddev.sen += ds * ds;
        report.stddev.pre += dp * dp;
        report.stddev.pa += da * da;
    }
    report.stddev.dsc = std::sqrt(report.stddev.dsc / n);
    report.stddev.iou = std::sqrt(report.stddev.iou / n);
    report.stddev.sen = std::sqrt(report.stddev.sen / n);
    report.stddev.pre = std::sqrt(report.stddev.pre / n);
    report.stddev.pa = std::sqrt(report.stddev.pa / n);
    report.per_image = std::move(records);
    return report;
}

AgreementStats bland_altman(const std::vector<std::pair<Mask, Mask>>& pairs,
                            std::int64_t canvas_area) {
    if (pairs.empty()) throw std::invalid_argument("bland_altman: empty input list");
    if (canvas_area <= 0) throw std::invalid_argument("bland_altman: canvas_area must be > 0");

    AgreementStats stats;
    stats.points.reserve(pairs.size());
    for (const auto& [pred, gt] : pairs) {
        const double pr = 100.0 * static_cast<double>(pred.foreground_count()) /
                          static_cast<double>(canvas_area);
        const double gr = 100.0 * static_cast<double>(gt.foreground_count()) /
                          static_cast<double>(canvas_area);
        stats.points.emplace_back(0.5 * (pr + gr), pr - gr);
    }

    const double n = static_cast<double>(stats.points.size());
    for (const auto& [mean, diff] : stats.points) stats.mean_diff += diff;
    stats.mean_diff /= n;
    for (const auto& [mean, diff] : stats.points) {
        const double d = diff - stats.mean_diff;
        stats.sd_diff += d * d;
    }
    stats.sd_diff = std::sqrt(stats.sd_diff / n);
    stats.loa_low = stats.mean_diff - 1.96 * stats.sd_diff;
    stats.loa_high = stats.mean_diff + 1.96 * stats.sd_diff;
    return stats;
}

Mask binarize(const Image& probabilities, double threshold) {
    Mask out(probabilities.height, probabilities.width);
    for (std::size_t i = 0; i < probabilities.data.size(); ++i) {
        out.data[i] = probabilities.data[i] > threshold ? 1 : 0;
    }
    return out;
}

}  // namespace dems
