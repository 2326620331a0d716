#pragma once

#include "semd/data.hpp"
#include "semd/detectors.hpp"
#include "semd/probe.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace semd {

enum class RemovalStrategy { none, per_image, per_label };

std::string to_string(RemovalStrategy s);
RemovalStrategy removal_strategy_from_string(const std::string& s);

// Which (example, class) annotations and whole examples to drop. A dropped
// example has every one of its pairs marked too.
struct RemovalPlan {
    std::vector<RemovalStrategy> strategy;  // per class
    std::vector<double> alpha;              // per class
    MultiLabelSet removed_pairs;            // n x C, 1 = excluded from class c
    std::vector<bool> dropped_examples;     // n

    static RemovalPlan empty(std::size_t n, std::size_t num_classes);

    std::size_t size() const noexcept { return dropped_examples.size(); }
    std::size_t num_classes() const noexcept { return strategy.size(); }
    bool is_empty() const;
    std::size_t removals_for_class(std::size_t c) const;

    void drop_example(std::size_t i);
    void remove_pair(std::size_t i, std::size_t c) { removed_pairs.set(i, c, true); }

    std::vector<std::pair<std::size_t, std::size_t>> pair_list() const;
    std::vector<std::size_t> dropped_list() const;
};

// Per-class binary confident learning, shared by every strategy.
struct ClassAnalysis {
    bool skipped = false;     // single-valued column
    Matrix proba;             // n x 2 out-of-sample probabilities
    MislabelReport report;    // binary CL report
    std::size_t flag_count = 0;
};

struct MultiLabelAnalysis {
    std::vector<ClassAnalysis> classes;
    std::size_t total_flags() const;
};

// Runs cross-validated binary probes + CL for every class column. Columns
// without both values are skipped with a warning.
MultiLabelAnalysis analyze_multilabel(const Matrix& x, const MultiLabelSet& y, const TrainConfig& cfg);

// Class c drops the floor(alpha_c * flag_count_c) top-ranked (example, c) pairs.
RemovalPlan per_label_removal(const MultiLabelAnalysis& analysis, std::size_t n, const std::vector<double>& alpha);
RemovalPlan per_label_removal(const Matrix& x, const MultiLabelSet& y, const TrainConfig& cfg,
                              const std::vector<double>& alpha);

enum class QualityAggregate { softmin, mean };

// q[i, c] = P_c(i, Y[i, c]); the per-example score aggregates over classes
// (skipped classes excluded). softmin: sum q w / sum w with w = exp(-q / tau).
std::vector<double> aggregate_label_quality(const MultiLabelAnalysis& analysis, const MultiLabelSet& y,
                                            double tau = 0.1, QualityAggregate how = QualityAggregate::softmin);

// Drops the `budget` lowest-scoring examples (ties: lower index first). The
// default budget is the sum of the per-class binary CL flag counts.
RemovalPlan per_image_removal(const MultiLabelAnalysis& analysis, const MultiLabelSet& y,
                              std::optional<std::size_t> budget = std::nullopt, double tau = 0.1,
                              QualityAggregate how = QualityAggregate::softmin);
RemovalPlan per_image_removal(const Matrix& x, const MultiLabelSet& y, const TrainConfig& cfg,
                              std::optional<std::size_t> budget = std::nullopt, double tau = 0.1);

// Rows that remain in each class's binary training set. Inputs are untouched.
struct CleanedViews {
    std::vector<std::vector<std::size_t>> class_rows;  // per class, ascending
    std::vector<std::size_t> kept_examples;            // not dropped entirely
};

CleanedViews apply_plan(const MultiLabelSet& y, const RemovalPlan& plan);

struct GridSpec {
    std::vector<RemovalStrategy> strategies = {RemovalStrategy::per_image, RemovalStrategy::per_label};
    std::vector<double> alphas = {0.5, 1.0, 1.5, 2.0};
    double tau = 0.1;
};

struct GridCell {
    std::size_t cls = 0;
    RemovalStrategy strategy = RemovalStrategy::none;
    double alpha = 0.0;
    std::size_t removed = 0;
    std::optional<double> val_auc;  // empty when the cell could not be evaluated
};

struct ClassChoice {
    RemovalStrategy strategy = RemovalStrategy::none;
    double alpha = 0.0;
    std::size_t removed = 0;
    std::optional<double> val_auc;
    std::optional<double> baseline_auc;  // the "none" cell
    bool excluded = false;               // validation AUC undefined
};

struct GridSearchResult {
    std::vector<ClassChoice> choices;
    std::vector<GridCell> table;
    RemovalPlan plan;

    nlohmann::json to_json() const;
};

// Per class and per grid cell (plus the implicit "none" cell): remove the
// cell's pairs from class c only, retrain the class-c binary probe, score
// validation AUC. The best cell per class wins (ties: fewer removals).
GridSearchResult optimal_per_class_removal(const Matrix& x_train, const MultiLabelSet& y_train,
                                           const Matrix& x_val, const MultiLabelSet& y_val, const GridSpec& grid,
                                           const TrainConfig& cfg);
GridSearchResult optimal_per_class_removal(const MultiLabelAnalysis& analysis, const Matrix& x_train,
                                           const MultiLabelSet& y_train, const Matrix& x_val,
                                           const MultiLabelSet& y_val, const GridSpec& grid, const TrainConfig& cfg);

// Class-c binary probe trained on `rows`. Throws MissingClass if the rows
// hold a single label value.
ProbeModel train_class_probe(const Matrix& x, const MultiLabelSet& y, std::size_t c,
                             const std::vector<std::size_t>& rows, const TrainConfig& cfg);

void write_removal_plan(const RemovalPlan& plan, const std::filesystem::path& path);
void write_grid_table(const GridSearchResult& result, const std::filesystem::path& path);

}  // namespace semd
