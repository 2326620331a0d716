#include "semd/multilabel.hpp"

#include "semd/common.hpp"
#include "semd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace semd {

std::string to_string(RemovalStrategy s) {
    switch (s) {
        case RemovalStrategy::none: return "none";
        case RemovalStrategy::per_image: return "per-image";
        case RemovalStrategy::per_label: return "per-label";
    }
    return "unknown";
}

RemovalStrategy removal_strategy_from_string(const std::string& s) {
    if (s == "none") return RemovalStrategy::none;
    if (s == "per-image" || s == "per_image") return RemovalStrategy::per_image;
    if (s == "per-label" || s == "per_label") return RemovalStrategy::per_label;
    throw InvalidInput("unknown removal strategy '" + s + "'");
}

// ---------------------------------------------------------------------------
// RemovalPlan

RemovalPlan RemovalPlan::empty(std::size_t n, std::size_t num_classes) {
    RemovalPlan p;
    p.strategy.assign(num_classes, RemovalStrategy::none);
    p.alpha.assign(num_classes, 0.0);
    p.removed_pairs = MultiLabelSet(n, num_classes);
    p.dropped_examples.assign(n, false);
    return p;
}

bool RemovalPlan::is_empty() const {
    if (std::any_of(dropped_examples.begin(), dropped_examples.end(), [](bool b) { return b; })) return false;
    for (std::size_t i = 0; i < removed_pairs.size(); ++i) {
        for (std::size_t c = 0; c < removed_pairs.num_classes(); ++c) {
            if (removed_pairs(i, c)) return false;
        }
    }
    return true;
}

std::size_t RemovalPlan::removals_for_class(std::size_t c) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < removed_pairs.size(); ++i) k += removed_pairs(i, c);
    return k;
}

void RemovalPlan::drop_example(std::size_t i) {
    dropped_examples[i] = true;
    for (std::size_t c = 0; c < removed_pairs.num_classes(); ++c) removed_pairs.set(i, c, true);
}

std::vector<std::pair<std::size_t, std::size_t>> RemovalPlan::pair_list() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < removed_pairs.size(); ++i) {
        if (dropped_examples[i]) continue;
        for (std::size_t c = 0; c < removed_pairs.num_classes(); ++c) {
            if (removed_pairs(i, c)) out.emplace_back(i, c);
        }
    }
    return out;
}

std::vector<std::size_t> RemovalPlan::dropped_list() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dropped_examples.size(); ++i) {
        if (dropped_examples[i]) out.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analysis

std::size_t MultiLabelAnalysis::total_flags() const {
    std::size_t total = 0;
    for (const auto& c : classes) total += c.flag_count;
    return total;
}

namespace {

bool has_both_values(const MultiLabelSet& y, std::size_t c) {
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < y.size(); ++i) {
        (y(i, c) ? pos : neg) = true;
        if (pos && neg) return true;
    }
    return false;
}

std::size_t scaled_count(double alpha, std::size_t flag_count) {
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(flag_count) + 1e-9));
}

// Examples sorted from lowest to highest aggregate quality.
std::vector<std::size_t> quality_order(const std::vector<double>& score) {
    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    return order;
}

}  // namespace

MultiLabelAnalysis analyze_multilabel(const Matrix& x, const MultiLabelSet& y, const TrainConfig& cfg) {
    if (x.rows() != y.size()) throw InvalidInput("analyze_multilabel: row/label count mismatch");
    const std::size_t C = y.num_classes();
    MultiLabelAnalysis out;
    out.classes.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        if (!has_both_values(y, c)) {
            warn("class " + std::to_string(c) + " has a single label value; skipped");
            out.classes[c].skipped = true;
        }
    }
    TrainConfig inner = cfg;
    inner.jobs = 1;
    parallel_for(C, cfg.jobs, [&](std::size_t c) {
        auto& cls = out.classes[c];
        if (cls.skipped) return;
        TrainConfig class_cfg = inner;
        class_cfg.seed = splitmix64(cfg.seed ^ (0x636c617373ULL + c));
        const LabelSet column = y.column(c);
        cls.proba = cross_val_proba(x, column, class_cfg);
        auto cl = confident_learning(cls.proba, column);
        cls.report = std::move(cl.report);
        cls.report.params["class"] = c;
        cls.flag_count = cls.report.num_flagged();
    });
    return out;
}

RemovalPlan per_label_removal(const MultiLabelAnalysis& analysis, std::size_t n, const std::vector<double>& alpha) {
    const std::size_t C = analysis.classes.size();
    if (alpha.size() != C) throw InvalidInput("per_label_removal: need one multiplier per class");
    auto plan = RemovalPlan::empty(n, C);
    for (std::size_t c = 0; c < C; ++c) {
        if (!(alpha[c] >= 0.0)) throw InvalidInput("per_label_removal: multipliers must be >= 0");
        const auto& cls = analysis.classes[c];
        plan.alpha[c] = alpha[c];
        if (cls.skipped || alpha[c] == 0.0) continue;
        plan.strategy[c] = RemovalStrategy::per_label;
        const auto count = std::min(n, scaled_count(alpha[c], cls.flag_count));
        for (std::size_t k = 0; k < count; ++k) plan.remove_pair(cls.report.ranking[k], c);
    }
    return plan;
}

RemovalPlan per_label_removal(const Matrix& x, const MultiLabelSet& y, const TrainConfig& cfg,
                              const std::vector<double>& alpha) {
    return per_label_removal(analyze_multilabel(x, y, cfg), y.size(), alpha);
}

std::vector<double> aggregate_label_quality(const MultiLabelAnalysis& analysis, const MultiLabelSet& y, double tau,
                                            QualityAggregate how) {
    if (!(tau > 0.0)) throw InvalidInput("aggregate_label_quality: tau must be positive");
    const std::size_t n = y.size();
    std::vector<double> score(n, 1.0);
    std::vector<double> q;
    for (std::size_t i = 0; i < n; ++i) {
        q.clear();
        for (std::size_t c = 0; c < analysis.classes.size(); ++c) {
            const auto& cls = analysis.classes[c];
            if (cls.skipped) continue;
            q.push_back(cls.proba(i, y(i, c)));
        }
        if (q.empty()) continue;
        if (how == QualityAggregate::mean) {
            score[i] = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size());
            continue;
        }
        const double qmin = *std::min_element(q.begin(), q.end());
        double num = 0.0, den = 0.0;
        for (double v : q) {
            const double w = std::exp(-(v - qmin) / tau);
            num += w * v;
            den += w;
        }
        score[i] = num / den;
    }
    return score;
}

RemovalPlan per_image_removal(const MultiLabelAnalysis& analysis, const MultiLabelSet& y,
                              std::optional<std::size_t> budget, double tau, QualityAggregate how) {
    const std::size_t n = y.size();
    const std::size_t C = y.num_classes();
    auto plan = RemovalPlan::empty(n, C);
    const auto score = aggregate_label_quality(analysis, y, tau, how);
    const std::size_t take = std::min(n, budget.value_or(analysis.total_flags()));
    const auto order = quality_order(score);
    for (std::size_t k = 0; k < take; ++k) plan.drop_example(order[k]);
    for (std::size_t c = 0; c < C; ++c) {
        plan.strategy[c] = take > 0 ? RemovalStrategy::per_image : RemovalStrategy::none;
        plan.alpha[c] = take > 0 ? 1.0 : 0.0;
    }
    return plan;
}

RemovalPlan per_image_removal(const Matrix& x, const MultiLabelSet& y, const TrainConfig& cfg,
                              std::optional<std::size_t> budget, double tau) {
    return per_image_removal(analyze_multilabel(x, y, cfg), y, budget, tau);
}

CleanedViews apply_plan(const MultiLabelSet& y, const RemovalPlan& plan) {
    if (plan.size() != y.size() || plan.num_classes() != y.num_classes() ||
        plan.removed_pairs.size() != y.size()) {
        throw InvalidInput("apply_plan: plan shape does not match the labels");
    }
    CleanedViews v;
    v.class_rows.resize(y.num_classes());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!plan.dropped_examples[i]) v.kept_examples.push_back(i);
        for (std::size_t c = 0; c < y.num_classes(); ++c) {
            if (!plan.dropped_examples[i] && !plan.removed_pairs(i, c)) v.class_rows[c].push_back(i);
        }
    }
    return v;
}

ProbeModel train_class_probe(const Matrix& x, const MultiLabelSet& y, std::size_t c,
                             const std::vector<std::size_t>& rows, const TrainConfig& cfg) {
    const Matrix xs = select_rows(x, rows);
    LabelSet col;
    col.num_classes = 2;
    col.labels.reserve(rows.size());
    for (auto i : rows) col.labels.push_back(y(i, c));
    return train_probe(xs, col, cfg);
}

// ---------------------------------------------------------------------------
// Grid search

namespace {

std::optional<double> class_val_auc(const ProbeModel& model, const Matrix& x_val, const MultiLabelSet& y_val,
                                    std::size_t c) {
    const Matrix p = predict_proba(model, x_val);
    std::vector<double> scores(p.rows());
    std::vector<int> labels(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        scores[i] = p(i, 1);
        labels[i] = y_val(i, c);
    }
    return roc_auc(scores, labels);
}

}  // namespace

nlohmann::json GridSearchResult::to_json() const {
    nlohmann::json j;
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json cls = nlohmann::json::array();
    for (std::size_t c = 0; c < choices.size(); ++c) {
        const auto& ch = choices[c];
        cls.push_back({{"class", c},
                       {"strategy", to_string(ch.strategy)},
                       {"alpha", ch.alpha},
                       {"removed", ch.removed},
                       {"val_auc", opt(ch.val_auc)},
                       {"baseline_auc", opt(ch.baseline_auc)},
                       {"excluded", ch.excluded}});
    }
    j["choices"] = cls;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : table) {
        cells.push_back({{"class", cell.cls},
                         {"strategy", to_string(cell.strategy)},
                         {"alpha", cell.alpha},
                         {"removed", cell.removed},
                         {"val_auc", opt(cell.val_auc)}});
    }
    j["grid"] = cells;
    return j;
}

GridSearchResult optimal_per_class_removal(const Matrix& x_train, const MultiLabelSet& y_train, const Matrix& x_val,
                                           const MultiLabelSet& y_val, const GridSpec& grid, const TrainConfig& cfg) {
    return optimal_per_class_removal(analyze_multilabel(x_train, y_train, cfg), x_train, y_train, x_val, y_val, grid,
                                     cfg);
}

GridSearchResult optimal_per_class_removal(const MultiLabelAnalysis& analysis, const Matrix& x_train,
                                           const MultiLabelSet& y_train, const Matrix& x_val,
                                           const MultiLabelSet& y_val, const GridSpec& grid, const TrainConfig& cfg) {
    const std::size_t n = y_train.size();
    const std::size_t C = y_train.num_classes();
    if (x_train.rows() != n || x_val.rows() != y_val.size()) throw InvalidInput("gridsearch: row/label count mismatch");
    if (y_val.num_classes() != C) throw InvalidInput("gridsearch: validation class count mismatch");
    if (analysis.classes.size() != C) throw InvalidInput("gridsearch: analysis class count mismatch");

    const bool need_quality = std::find(grid.strategies.begin(), grid.strategies.end(), RemovalStrategy::per_image) !=
                              grid.strategies.end();
    const std::vector<std::size_t> image_order =
        need_quality ? quality_order(aggregate_label_quality(analysis, y_train, grid.tau)) : std::vector<std::size_t>{};

    TrainConfig inner = cfg;
    inner.jobs = 1;

    std::vector<std::vector<GridCell>> cells(C);
    std::vector<std::vector<std::vector<std::size_t>>> removed_rows(C);
    std::vector<bool> excluded(C, false);
    for (std::size_t c = 0; c < C; ++c) {
        if (!has_both_values(y_val, c)) {
            warn("gridsearch: validation labels for class " + std::to_string(c) +
                 " are single-valued; AUC undefined, class excluded");
            excluded[c] = true;
        }
    }

    parallel_for(C, cfg.jobs, [&](std::size_t c) {
        const auto& cls = analysis.classes[c];
        auto add_cell = [&](RemovalStrategy s, double alpha, std::vector<std::size_t> removed) {
            GridCell cell{c, s, alpha, removed.size(), std::nullopt};
            cells[c].push_back(cell);
            removed_rows[c].push_back(std::move(removed));
        };
        add_cell(RemovalStrategy::none, 0.0, {});
        if (!cls.skipped) {
            for (auto s : grid.strategies) {
                if (s == RemovalStrategy::none) continue;
                for (double alpha : grid.alphas) {
                    const auto count = std::min(n, scaled_count(alpha, cls.flag_count));
                    std::vector<std::size_t> removed;
                    for (std::size_t k = 0; k < count; ++k) {
                        removed.push_back(s == RemovalStrategy::per_label ? cls.report.ranking[k] : image_order[k]);
                    }
                    add_cell(s, alpha, std::move(removed));
                }
            }
        }
        if (excluded[c]) return;
        for (std::size_t k = 0; k < cells[c].size(); ++k) {
            std::vector<bool> drop(n, false);
            for (auto i : removed_rows[c][k]) drop[i] = true;
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < n; ++i) {
                if (!drop[i]) rows.push_back(i);
            }
            try {
                const auto model = train_class_probe(x_train, y_train, c, rows, inner);
                cells[c][k].val_auc = class_val_auc(model, x_val, y_val, c);
            } catch (const MissingClass&) {
                warn("gridsearch: class " + std::to_string(c) + " cell " + to_string(cells[c][k].strategy) +
                     " removes every example of one label; cell skipped");
            }
        }
    });

    GridSearchResult result;
    result.plan = RemovalPlan::empty(n, C);
    result.choices.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        auto& choice = result.choices[c];
        choice.excluded = excluded[c];
        std::size_t best = 0;  // the "none" cell
        choice.baseline_auc = cells[c][0].val_auc;
        for (std::size_t k = 1; k < cells[c].size(); ++k) {
            const auto& cell = cells[c][k];
            if (!cell.val_auc) continue;
            const auto& incumbent = cells[c][best];
            if (!incumbent.val_auc || *cell.val_auc > *incumbent.val_auc ||
                (*cell.val_auc == *incumbent.val_auc && cell.removed < incumbent.removed)) {
                best = k;
            }
        }
        const auto& win = cells[c][best];
        choice.strategy = win.strategy;
        choice.alpha = win.alpha;
        choice.removed = win.removed;
        choice.val_auc = win.val_auc;
        result.plan.strategy[c] = win.strategy;
        result.plan.alpha[c] = win.alpha;
        for (auto i : removed_rows[c][best]) result.plan.remove_pair(i, c);
        result.table.insert(result.table.end(), cells[c].begin(), cells[c].end());
    }
    return result;
}

void write_removal_plan(const RemovalPlan& plan, const std::filesystem::path& path) {
    nlohmann::json j;
    j["n"] = plan.size();
    j["num_classes"] = plan.num_classes();
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < plan.num_classes(); ++c) {
        classes.push_back({{"class", c},
                           {"strategy", to_string(plan.strategy[c])},
                           {"alpha", plan.alpha[c]},
                           {"removed", plan.removals_for_class(c)}});
    }
    j["classes"] = classes;
    j["dropped_examples"] = plan.dropped_list();
    nlohmann::json pairs = nlohmann::json::array();
    for (auto [i, c] : plan.pair_list()) pairs.push_back({i, c});
    j["removed_pairs"] = pairs;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_grid_table(const GridSearchResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "class,strategy,alpha,removed,val_auc,chosen\n";
    for (const auto& cell : result.table) {
        const auto& ch = result.choices[cell.cls];
        const bool chosen = ch.strategy == cell.strategy && ch.alpha == cell.alpha;
        out << cell.cls << ',' << to_string(cell.strategy) << ',' << cell.alpha << ',' << cell.removed << ',';
        if (cell.val_auc) out << std::setprecision(10) << *cell.val_auc;
        out << ',' << (chosen ? 1 : 0) << '\n';
    }
}

}  // namespace semd
