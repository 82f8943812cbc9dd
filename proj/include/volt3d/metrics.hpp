#pragma once

#include <string>
#include <utility>
#include <vector>

#include "volt3d/errors.hpp"

namespace volt3d {

struct ConfusionMatrix {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

struct ScalarMetrics {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

struct RocPoint {
    double fpr = 0, tpr = 0;
    bool operator==(const RocPoint&) const = default;
};

struct MetricsReport {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0, auc = 0;
    bool has_auc = true; // false when the split held a single class (no ROC)
    ConfusionMatrix confusion;
    std::vector<RocPoint> roc_points;
    double threshold = 0.5;
};

// Predicted positive iff score >= threshold; positive class is label 1.
ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                          double threshold);

// Standard definitions with explicit zero conventions: precision = 0 when
// tp+fp = 0, recall = 0 when tp+fn = 0, f1 = 0 when precision+recall = 0.
ScalarMetrics scalar_metrics(const ConfusionMatrix& cm);

// ROC over thresholds at every distinct score (descending) with a (0,0)
// sentinel; AUC by the trapezoid rule, which equals the Mann-Whitney
// statistic (#concordant + 0.5*#tied) / (#pos * #neg).
std::pair<double, std::vector<RocPoint>> roc_auc(const std::vector<double>& scores,
                                                 const std::vector<int>& labels);

MetricsReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold = 0.5);

// JSON object with fixed keys: accuracy, auc, precision, recall, f1, tp, fp,
// tn, fn, threshold.
std::string report_to_json(const MetricsReport& report);

} // namespace volt3d
