#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pnkit::eval {

/// Counts with atypical (label 1) as the positive class.
struct ConfusionMatrix {
    long tp = 0, fn = 0, fp = 0, tn = 0;
    long total() const { return tp + fn + fp + tn; }
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths);

/// SE = TP/(TP+FN), SP = TN/(FP+TN), PR = TP/(TP+FP), AC = (TP+TN)/(P+N).
/// A metric whose denominator is zero is absent, not zero.
struct Metrics {
    std::optional<double> se, sp, pr, ac;
};

Metrics metrics(const ConfusionMatrix& cm);

/// ROC by descending-score threshold sweep with tied scores stepped as one
/// group, so the trapezoidal AUC equals the Mann-Whitney statistic (ties
/// counted half). Points run from (0,0) to (1,1).
struct RocResult {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr)
    double auc = 0.0;
};

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& truths);

/// Fraction of images with a detection, per class and overall.
struct DetectionRates {
    std::optional<double> typical;
    std::optional<double> atypical;
    double overall = 0.0;
};

struct DetectionFlag {
    int label = 0;
    bool detected = false;
};

DetectionRates detection_rates(const std::vector<DetectionFlag>& flags);

/// JSON with the fixed keys tp,fn,fp,tn,se,sp,pr,ac,auc (absent metrics are
/// null). AUC may itself be absent when no scores were available.
std::string report_json(const ConfusionMatrix& cm, const Metrics& m, std::optional<double> auc);

/// CSV with header fpr,tpr.
void write_roc_csv(const std::vector<std::pair<double, double>>& points, const std::string& path);

}  // namespace pnkit::eval
