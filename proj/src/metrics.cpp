#include "semd/common.hpp"
#include "semd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace semd {

DetectionScore detection_f1(const std::vector<bool>& flags, const std::vector<bool>& mask) {
    if (flags.size() != mask.size()) throw InvalidInput("detection_f1: flags and mask differ in length");
    DetectionScore s;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i] && mask[i]) ++s.tp;
        else if (flags[i]) ++s.fp;
        else if (mask[i]) ++s.fn;
        else ++s.tn;
    }
    const double tp = static_cast<double>(s.tp);
    s.precision = s.tp + s.fp > 0 ? tp / static_cast<double>(s.tp + s.fp) : 0.0;
    s.recall = s.tp + s.fn > 0 ? tp / static_cast<double>(s.tp + s.fn) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

DetectionScore detection_f1(const MislabelReport& report, const std::vector<bool>& mask) {
    return detection_f1(report.flags, mask);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw InvalidInput("roc_auc: scores and labels differ in length");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw InvalidInput("roc_auc: labels must be 0 or 1");
        pos += labels[i];
    }
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetric("roc_auc: labels contain a single class");

    // Midranks over sorted scores; ties share the average rank.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size();) {
        std::size_t hi = lo;
        while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
        const double rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
        for (std::size_t k = lo; k <= hi; ++k) {
            if (labels[order[k]] == 1) pos_rank_sum += rank;
        }
        lo = hi + 1;
    }
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * q);
}

double accuracy(const Matrix& proba, const LabelSet& truth) {
    if (proba.rows() != truth.size()) throw InvalidInput("accuracy: row/label count mismatch");
    if (proba.rows() == 0) throw UndefinedMetric("accuracy: empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < proba.rows(); ++i) {
        hit += static_cast<int>(argmax_row(proba.row(i))) == truth[i];
    }
    return static_cast<double>(hit) / static_cast<double>(proba.rows());
}

std::vector<ThresholdPoint> tracin_threshold_sweep(const std::vector<std::size_t>& ranking,
                                                   const std::vector<bool>& mask,
                                                   const std::vector<std::size_t>& thresholds,
                                                   std::optional<std::size_t> reference) {
    if (ranking.size() != mask.size()) throw InvalidInput("threshold sweep: ranking and mask differ in length");
    std::vector<std::size_t> ts = thresholds;
    if (reference && std::find(ts.begin(), ts.end(), *reference) == ts.end()) ts.push_back(*reference);
    std::sort(ts.begin(), ts.end());
    std::vector<ThresholdPoint> out;
    for (auto t : ts) {
        if (t > ranking.size()) throw InvalidInput("threshold sweep: threshold exceeds n");
        std::vector<bool> flags(mask.size(), false);
        for (std::size_t k = 0; k < t; ++k) flags[ranking[k]] = true;
        out.push_back({t, detection_f1(flags, mask).f1, reference && *reference == t});
    }
    return out;
}

double macro_average(const std::vector<double>& per_class) {
    double sum = 0.0;
    std::size_t k = 0;
    for (double v : per_class) {
        if (std::isnan(v)) continue;
        sum += v;
        ++k;
    }
    if (k == 0) throw UndefinedMetric("macro average: every class is undefined");
    return sum / static_cast<double>(k);
}

}  // namespace semd
