#include <pnkit/eval.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include <pnkit/error.hpp>

namespace pnkit::eval {

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths) {
    if (preds.size() != truths.size())
        raise(Errc::length_mismatch, "confusion: prediction/truth lengths differ");
    if (preds.empty()) raise(Errc::empty_input, "confusion: no samples");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool pred_pos = preds[i] == 1;
        const bool true_pos = truths[i] == 1;
        if (pred_pos && true_pos)
            ++cm.tp;
        else if (!pred_pos && true_pos)
            ++cm.fn;
        else if (pred_pos && !true_pos)
            ++cm.fp;
        else
            ++cm.tn;
    }
    return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
    Metrics m;
    if (cm.tp + cm.fn > 0) m.se = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (cm.fp + cm.tn > 0) m.sp = static_cast<double>(cm.tn) / static_cast<double>(cm.fp + cm.tn);
    if (cm.tp + cm.fp > 0) m.pr = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    if (cm.total() > 0) m.ac = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
    return m;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& truths) {
    if (scores.size() != truths.size())
        raise(Errc::length_mismatch, "roc_auc: score/truth lengths differ");
    long pos = 0, neg = 0;
    for (int t : truths) (t == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) raise(Errc::single_class, "roc_auc: both classes required");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    RocResult roc;
    roc.points.emplace_back(0.0, 0.0);
    long tp = 0, fp = 0;
    double auc = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        // Step through all samples sharing this score as one threshold.
        std::size_t j = i;
        long dtp = 0, dfp = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (truths[order[j]] == 1 ? dtp : dfp)++;
            ++j;
        }
        const double fpr0 = static_cast<double>(fp) / static_cast<double>(neg);
        const double tpr0 = static_cast<double>(tp) / static_cast<double>(pos);
        tp += dtp;
        fp += dfp;
        const double fpr1 = static_cast<double>(fp) / static_cast<double>(neg);
        const double tpr1 = static_cast<double>(tp) / static_cast<double>(pos);
        auc += (fpr1 - fpr0) * 0.5 * (tpr0 + tpr1);
        roc.points.emplace_back(fpr1, tpr1);
        i = j;
    }
    roc.auc = auc;
    return roc;
}

DetectionRates detection_rates(const std::vector<DetectionFlag>& flags) {
    if (flags.empty()) raise(Errc::empty_input, "detection_rates: no results");
    long count[2] = {0, 0};
    long hit[2] = {0, 0};
    for (const auto& f : flags) {
        const int c = f.label == 1 ? 1 : 0;
        ++count[c];
        hit[c] += f.detected ? 1 : 0;
    }
    DetectionRates rates;
    if (count[0] > 0) rates.typical = static_cast<double>(hit[0]) / static_cast<double>(count[0]);
    if (count[1] > 0) rates.atypical = static_cast<double>(hit[1]) / static_cast<double>(count[1]);
    rates.overall = static_cast<double>(hit[0] + hit[1]) / static_cast<double>(count[0] + count[1]);
    return rates;
}

std::string report_json(const ConfusionMatrix& cm, const Metrics& m, std::optional<double> auc) {
    nlohmann::json j;
    j["tp"] = cm.tp;
    j["fn"] = cm.fn;
    j["fp"] = cm.fp;
    j["tn"] = cm.tn;
    const auto set = [&](const char* key, const std::optional<double>& v) {
        if (v)
            j[key] = *v;
        else
            j[key] = nullptr;
    };
    set("se", m.se);
    set("sp", m.sp);
    set("pr", m.pr);
    set("ac", m.ac);
    set("auc", auc);
    return j.dump(2) + "\n";
}

void write_roc_csv(const std::vector<std::pair<double, double>>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::unreadable_file, "cannot write " + path);
    out << "fpr,tpr\n";
    char buf[80];
    for (const auto& [fpr, tpr] : points) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", fpr, tpr);
        out << buf;
    }
}

}  // namespace pnkit::eval
