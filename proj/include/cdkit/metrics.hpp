#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdkit {

/// Binary change-detection confusion matrix; "change" is the positive class.
/// Counts are 64-bit: a full-size test split is ~1.3e8 pixels.
struct ConfusionMatrix {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }

    void accumulate(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& label) {
        if (pred.size() != label.size())
            throw std::invalid_argument("confusion: mask sizes disagree, " + std::to_string(pred.size()) +
                                        " vs " + std::to_string(label.size()));
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] > 1 || label[i] > 1)
                throw std::invalid_argument("confusion: masks must be binary");
            if (pred[i] && label[i])
                ++tp;
            else if (pred[i])
                ++fp;
            else if (label[i])
                ++fn;
            else
                ++tn;
        }
    }

    void merge(const ConfusionMatrix& other) {
        tp += other.tp;
        fp += other.fp;
        fn += other.fn;
        tn += other.tn;
    }
};

struct MetricReport {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double iou = 0;
    double oa = 0;
    bool degenerate_precision = false;  // no predicted positives
    bool degenerate_recall = false;     // no actual positives

    /// Percentages at two decimals, one `key: value` line each.
    std::string serialize() const {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(2);
        os << "precision: " << precision * 100.0 << "\n"
           << "recall: " << recall * 100.0 << "\n"
           << "f1: " << f1 * 100.0 << "\n"
           << "iou: " << iou * 100.0 << "\n"
           << "oa: " << oa * 100.0 << "\n";
        if (degenerate_precision) os << "degenerate_precision: true\n";
        if (degenerate_recall) os << "degenerate_recall: true\n";
        return os.str();
    }
};

inline MetricReport report(const ConfusionMatrix& cm) {
    if (cm.total() <= 0) throw std::invalid_argument("report: empty confusion matrix");
    MetricReport r;
    const auto tp = static_cast<double>(cm.tp);
    if (cm.tp + cm.fp > 0)
        r.precision = tp / static_cast<double>(cm.tp + cm.fp);
    else
        r.degenerate_precision = true;
    if (cm.tp + cm.fn > 0)
        r.recall = tp / static_cast<double>(cm.tp + cm.fn);
    else
        r.degenerate_recall = true;
    if (r.precision + r.recall > 0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    if (cm.tp + cm.fp + cm.fn > 0) r.iou = tp / static_cast<double>(cm.tp + cm.fp + cm.fn);
    r.oa = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    return r;
}

}  // namespace cdkit
