#ifndef DEMS_METRICS_HPP
#define DEMS_METRICS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dems/image.hpp"

namespace dems {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t tn = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    std::int64_t total() const { return tp + tn + fp + fn; }
};

// Exact pixel counts between a binarized prediction and the ground truth.
ConfusionCounts confusion(const Mask& pred, const Mask& gt);

struct MetricRecord {
    std::string id;
    double dsc = 0.0;
    double iou = 0.0;
    double sen = 0.0;
    double pre = 0.0;
    double pa = 0.0;
};

// DSC = 2TP/(2TP+FP+FN), IoU = TP/(TP+FP+FN), SEN = TP/(TP+FN),
// PRE = TP/(TP+FP), PA = (TP+TN)/total. A 0/0 ratio is 1 when prediction and
// ground truth are both empty, 0 otherwise, so correct empty predictions are
// not punished.
MetricRecord compute_metrics(const ConfusionCounts& counts);

struct MetricReport {
    MetricRecord mean;
    MetricRecord stddev;  // population standard deviation per metric
    std::vector<MetricRecord> per_image;
};

MetricReport make_report(std::vector<MetricRecord> records);

// Bland-Altman agreement between predicted and ground-truth object sizes.
// Every field is in percent of the canvas area, including the stored points.
struct AgreementStats {
    double mean_diff = 0.0;
    double sd_diff = 0.0;  // population standard deviation
    double loa_low = 0.0;  // mean_diff - 1.96 * sd_diff
    double loa_high = 0.0;
    std::vector<std::pair<double, double>> points;  // (mean ratio, pred - gt)
};

AgreementStats bland_altman(const std::vector<std::pair<Mask, Mask>>& pairs,
                            std::int64_t canvas_area = 224 * 224);

// Threshold shared with the sensitivity loss.
Mask binarize(const Image& probabilities, double threshold = 0.5);

}  // namespace dems

#endif
