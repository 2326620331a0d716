#pragma once

#include "semd/data.hpp"
#include "semd/dataio.hpp"
#include "semd/detectors.hpp"
#include "semd/multilabel.hpp"
#include "semd/noise.hpp"
#include "semd/probe.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace semd {

// ---------------------------------------------------------------------------
// Metrics

struct DetectionScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Positives are the mask-true examples. Precision/recall are 0 when their
// denominator is 0; f1 = 2PR/(P+R), or 0 when P+R = 0.
DetectionScore detection_f1(const std::vector<bool>& flags, const std::vector<bool>& mask);
DetectionScore detection_f1(const MislabelReport& report, const std::vector<bool>& mask);

// Mann-Whitney U / (n_pos * n_neg) with tied scores counted as 1/2. Throws
// UndefinedMetric unless both label values occur.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

double accuracy(const Matrix& proba, const LabelSet& truth);

struct ThresholdPoint {
    std::size_t threshold = 0;
    double f1 = 0.0;
    bool is_reference = false;  // the CL-provided cutoff
};

// F1 of flagging the top-T ranked examples, for every T in `thresholds`.
std::vector<ThresholdPoint> tracin_threshold_sweep(const std::vector<std::size_t>& ranking,
                                                   const std::vector<bool>& mask,
                                                   const std::vector<std::size_t>& thresholds,
                                                   std::optional<std::size_t> reference = std::nullopt);

// ---------------------------------------------------------------------------
// Retraining

struct RetrainOutcome {
    double before = 0.0;  // accuracy, or macro AUC for multi-label
    double after = 0.0;
    std::vector<double> per_class_before;  // multi-label only
    std::vector<double> per_class_after;
    std::size_t removed = 0;
};

// Probe on all (noisy) rows vs. probe on the rows not in `removed`, both
// scored on the clean evaluation split. Throws MissingClass if cleaning
// removed a whole class.
RetrainOutcome retrain_after_cleaning(const Matrix& x_train, const LabelSet& y_train,
                                      const std::vector<std::size_t>& removed, const TrainConfig& cfg,
                                      const Matrix& x_eval, const LabelSet& y_eval);

// Multi-label: per-class binary probes, per-class AUC and their unweighted mean.
// Classes whose evaluation column is single-valued are left out of the mean.
RetrainOutcome retrain_after_cleaning(const Matrix& x_train, const MultiLabelSet& y_train, const RemovalPlan& plan,
                                      const TrainConfig& cfg, const Matrix& x_eval, const MultiLabelSet& y_eval);

// Per-class AUC of binary probes trained on the plan's cleaned rows; NaN for
// undefined classes.
std::vector<double> multilabel_class_auc(const Matrix& x_train, const MultiLabelSet& y_train,
                                         const RemovalPlan& plan, const TrainConfig& cfg, const Matrix& x_eval,
                                         const MultiLabelSet& y_eval);
double macro_average(const std::vector<double>& per_class);

// ---------------------------------------------------------------------------
// Sweeps

enum class Method { cl, knn, tracin, zeroshot };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct SweepRecord {
    double axis = 0.0;
    std::string method;  // detector or removal strategy
    std::uint64_t seed = 0;
    std::optional<double> f1;
    std::optional<double> precision;
    std::optional<double> recall;
    std::size_t flagged = 0;  // flagged examples, or removed pairs for fraction sweeps
    std::size_t noised = 0;   // noised examples, or subsample size for fraction sweeps
    std::optional<double> before;  // retrain metric on noisy data
    std::optional<double> after;   // retrain metric after cleaning
    std::vector<double> per_class;  // per-class AUC (fraction sweeps)
    std::string note;               // warning or error text for skipped cells
};

struct SweepResult {
    std::string axis_name;
    std::vector<SweepRecord> records;

    // Mean of a field across seeds for (axis, method); nullopt when no seed
    // produced a value.
    std::optional<double> mean_f1(double axis, const std::string& method) const;
    std::optional<double> mean_after(double axis, const std::string& method) const;
    std::optional<double> mean_gain(double axis, const std::string& method) const;

    void write_csv(const std::filesystem::path& path) const;
    nlohmann::json summary() const;
};

struct SingleLabelData {
    EmbeddingTensor x;
    LabelSet clean;
    std::optional<Matrix> class_embeddings;  // needed by zeroshot
    std::optional<EmbeddingTensor> eval_x;   // needed for retraining
    std::optional<LabelSet> eval_y;
};

struct NoiseSweepConfig {
    std::vector<double> levels;
    std::vector<Method> methods = {Method::cl};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    NoiseKind kind = NoiseKind::confidence_based;
    TrainConfig train;
    KnnConfig knn;
    SgdConfig sgd;
    bool tta = false;
    bool retrain = false;
    std::size_t jobs = 1;  // parallel cells
};

// One record per (level, method, seed). Noise is injected once per
// (level, seed) and shared by every method. TracIn uses the CL flag count
// of the same cell as its cutoff. Cells with no noised example record null
// F1; failing cells record the error in `note`.
SweepResult sweep_noise_levels(const SingleLabelData& data, const NoiseSweepConfig& cfg);

struct MultiLabelData {
    Matrix x_train;
    MultiLabelSet y_train;  // noisy
    Matrix x_val;
    MultiLabelSet y_val;    // clean
    Matrix x_test;
    MultiLabelSet y_test;   // clean
};

// Strategy names: "none", "per-image", "per-label", "optimal".
struct FractionSweepConfig {
    std::vector<double> fractions = {0.05, 0.1, 0.25, 0.5, 1.0};
    std::vector<std::string> strategies = {"none", "per-image", "per-label", "optimal"};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    TrainConfig train;
    GridSpec grid;
    bool evaluate_on_validation = false;  // default: test split
    std::size_t jobs = 1;
};

// Subsample the training set (stratified by label row, seeded), clean with
// each strategy, retrain and record per-class and macro AUC. `before` holds
// the no-removal macro AUC of the same subsample so gain = after - before.
SweepResult sweep_data_fractions(const MultiLabelData& data, const FractionSweepConfig& cfg);

// Takes round(fraction * size) rows from every stratum (at least one),
// returned ascending.
std::vector<std::size_t> stratified_subsample(std::span<const int> strata, double fraction, std::uint64_t seed);

// Sweep values "start:stop:step" (inclusive) or a comma list.
std::vector<double> parse_range(const std::string& text);

}  // namespace semd
