#include "volt3d/metrics.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

namespace volt3d {

namespace {

void check_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("LengthMismatch: need equally many scores and labels, at least one each");
    for (int v : labels)
        if (v != 0 && v != 1) throw DataError("BadLabel: labels must be 0 or 1");
}

} // namespace

ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                          double threshold) {
    check_pairs(scores, labels);
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw ConfigError("BadThreshold: decision threshold must lie in [0,1]");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1)
            (pred ? cm.tp : cm.fn)++;
        else
            (pred ? cm.fp : cm.tn)++;
    }
    return cm;
}

ScalarMetrics scalar_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DataError("EmptyMatrix: no evaluated samples");
    ScalarMetrics m;
    m.accuracy = double(cm.tp + cm.tn) / double(cm.total());
    m.precision = cm.tp + cm.fp > 0 ? double(cm.tp) / double(cm.tp + cm.fp) : 0.0;
    m.recall = cm.tp + cm.fn > 0 ? double(cm.tp) / double(cm.tp + cm.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

std::pair<double, std::vector<RocPoint>> roc_auc(const std::vector<double>& scores,
                                                 const std::vector<int>& labels) {
    check_pairs(scores, labels);
    std::int64_t pos = 0, neg = 0;
    for (int v : labels) (v == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw DataError("OneClassOnly: ROC needs at least one positive and one negative label");

    // Group by score, descending; each distinct score is one threshold.
    std::map<double, std::pair<std::int64_t, std::int64_t>, std::greater<double>> groups;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto& g = groups[scores[i]];
        (labels[i] == 1 ? g.first : g.second)++;
    }

    std::vector<RocPoint> points{{0.0, 0.0}};
    double auc = 0.0;
    std::int64_t tp = 0, fp = 0;
    for (const auto& [score, counts] : groups) {
        const double fpr0 = double(fp) / double(neg);
        const double tpr0 = double(tp) / double(pos);
        tp += counts.first;
        fp += counts.second;
        const double fpr1 = double(fp) / double(neg);
        const double tpr1 = double(tp) / double(pos);
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) * 0.5;
        points.push_back({fpr1, tpr1});
    }
    return {auc, points};
}

MetricsReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold) {
    MetricsReport r;
    r.threshold = threshold;
    r.confusion = confusion(scores, labels, threshold);
    const ScalarMetrics m = scalar_metrics(r.confusion);
    r.accuracy = m.accuracy;
    r.precision = m.precision;
    r.recall = m.recall;
    r.f1 = m.f1;
    std::tie(r.auc, r.roc_points) = roc_auc(scores, labels);
    return r;
}

std::string report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["accuracy"] = report.accuracy;
    if (report.has_auc)
        j["auc"] = report.auc;
    else
        j["auc"] = nullptr;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["f1"] = report.f1;
    j["tp"] = report.confusion.tp;
    j["fp"] = report.confusion.fp;
    j["tn"] = report.confusion.tn;
    j["fn"] = report.confusion.fn;
    j["threshold"] = report.threshold;
    return j.dump(2);
}

} // namespace volt3d
