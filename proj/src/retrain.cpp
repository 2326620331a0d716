#include "semd/common.hpp"
#include "semd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semd {

RetrainOutcome retrain_after_cleaning(const Matrix& x_train, const LabelSet& y_train,
                                      const std::vector<std::size_t>& removed, const TrainConfig& cfg,
                                      const Matrix& x_eval, const LabelSet& y_eval) {
    const std::size_t n = x_train.rows();
    if (y_train.size() != n) throw InvalidInput("retrain: row/label count mismatch");
    std::vector<bool> drop(n, false);
    for (auto i : removed) {
        if (i >= n) throw InvalidInput("retrain: removed index " + std::to_string(i) + " out of range");
        drop[i] = true;
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i) {
        if (!drop[i]) keep.push_back(i);
    }

    RetrainOutcome out;
    out.removed = n - keep.size();
    const auto noisy_model = train_probe(x_train, y_train, cfg);
    out.before = accuracy(predict_proba(noisy_model, x_eval), y_eval);
    const auto clean_model = train_probe(select_rows(x_train, keep), select_labels(y_train, keep), cfg);
    out.after = accuracy(predict_proba(clean_model, x_eval), y_eval);
    return out;
}

std::vector<double> multilabel_class_auc(const Matrix& x_train, const MultiLabelSet& y_train,
                                         const RemovalPlan& plan, const TrainConfig& cfg, const Matrix& x_eval,
                                         const MultiLabelSet& y_eval) {
    const std::size_t C = y_train.num_classes();
    if (x_train.rows() != y_train.size() || x_eval.rows() != y_eval.size()) {
        throw InvalidInput("retrain: row/label count mismatch");
    }
    if (y_eval.num_classes() != C) throw InvalidInput("retrain: evaluation class count mismatch");
    const auto views = apply_plan(y_train, plan);
    std::vector<double> auc(C, std::numeric_limits<double>::quiet_NaN());
    TrainConfig inner = cfg;
    inner.jobs = 1;
    parallel_for(C, cfg.jobs, [&](std::size_t c) {
        std::vector<int> truth(y_eval.size());
        for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = y_eval(i, c);
        if (std::all_of(truth.begin(), truth.end(), [&](int v) { return v == truth.front(); })) return;
        ProbeModel model;
        try {
            model = train_class_probe(x_train, y_train, c, views.class_rows[c], inner);
        } catch (const MissingClass&) {
            warn("retrain: class " + std::to_string(c) + " has a single label value after cleaning; left out");
            return;
        }
        const Matrix p = predict_proba(model, x_eval);
        std::vector<double> s(p.rows());
        for (std::size_t i = 0; i < p.rows(); ++i) s[i] = p(i, 1);
        auc[c] = roc_auc(s, truth);
    });
    return auc;
}

RetrainOutcome retrain_after_cleaning(const Matrix& x_train, const MultiLabelSet& y_train, const RemovalPlan& plan,
                                      const TrainConfig& cfg, const Matrix& x_eval, const MultiLabelSet& y_eval) {
    RetrainOutcome out;
    const auto none = RemovalPlan::empty(y_train.size(), y_train.num_classes());
    out.per_class_before = multilabel_class_auc(x_train, y_train, none, cfg, x_eval, y_eval);
    out.per_class_after = multilabel_class_auc(x_train, y_train, plan, cfg, x_eval, y_eval);
    // Compare on the classes defined in both runs.
    std::vector<double> b = out.per_class_before, a = out.per_class_after;
    for (std::size_t c = 0; c < a.size(); ++c) {
        if (std::isnan(a[c]) || std::isnan(b[c])) a[c] = b[c] = std::numeric_limits<double>::quiet_NaN();
    }
    out.before = macro_average(b);
    out.after = macro_average(a);
    for (std::size_t c = 0; c < plan.num_classes(); ++c) out.removed += plan.removals_for_class(c);
    return out;
}

}  // namespace semd
