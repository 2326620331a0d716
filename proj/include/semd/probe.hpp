#pragma once

#include "semd/data.hpp"
#include "semd/lbfgs.hpp"
#include "semd/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace semd {

// Multinomial softmax regression: p(c | x) = softmax(W x + b)_c.
struct ProbeModel {
    Matrix weights;               // C x d
    std::vector<double> biases;   // C
    double l2_lambda = 0.0;

    std::size_t num_classes() const noexcept { return weights.rows(); }
    std::size_t dim() const noexcept { return weights.cols(); }

    static ProbeModel zeros(std::size_t num_classes, std::size_t dim, double l2_lambda = 0.0);

    friend bool operator==(const ProbeModel&, const ProbeModel&) = default;
};

// Training objective is mean cross-entropy + (l2_lambda / 2) * ||W||_F^2.
// Biases are not penalized. l2_lambda = 1e-3 is the "weight decay 0.001"
// setting, read as the L2 coefficient on the mean loss.
struct TrainConfig {
    double l2_lambda = 1e-3;
    std::size_t max_iterations = 1000;
    double gradient_tolerance = 1e-6;
    std::size_t lbfgs_memory = 10;
    std::size_t cv_folds = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;  // CV fold parallelism; 0 = hardware concurrency

    // Throws InvalidInput on non-positive fields or cv_folds < 2.
    void validate() const;
};

// Flat parameter layout used by the optimizer: W row-major, then b.
std::vector<double> flatten(const ProbeModel& model);
ProbeModel unflatten(std::span<const double> params, std::size_t num_classes, std::size_t dim,
                     double l2_lambda);

// Regularized softmax cross-entropy over a fixed dataset. Holds references;
// X and y must outlive it.
class ProbeObjective {
public:
    ProbeObjective(const Matrix& x, const LabelSet& y, double l2_lambda);

    std::size_t num_params() const noexcept { return classes_ * (dim_ + 1); }
    double operator()(std::span<const double> params, std::span<double> grad) const;
    double value(std::span<const double> params) const;

private:
    const Matrix& x_;
    const LabelSet& y_;
    double lambda_;
    std::size_t classes_;
    std::size_t dim_;
};

struct ProbeFit {
    ProbeModel model;
    double objective = 0.0;
    std::size_t iterations = 0;
    LbfgsStatus status = LbfgsStatus::max_iterations;
    std::vector<double> objective_history;
};

// LBFGS from zero parameters, or from `initial` when given.
// Throws MissingClass when a class in [0, C) has no example and InvalidInput
// on non-finite embeddings or shape mismatch.
ProbeFit fit_probe(const Matrix& x, const LabelSet& y, const TrainConfig& cfg,
                   const std::optional<ProbeModel>& initial = std::nullopt);

ProbeModel train_probe(const Matrix& x, const LabelSet& y, const TrainConfig& cfg);

// n x C probabilities. Throws InvalidInput on a dimension mismatch.
Matrix predict_proba(const ProbeModel& model, const Matrix& x);

struct CrossValResult {
    // One probability matrix per evaluated view (a single entry unless
    // several views were passed).
    std::vector<Matrix> view_proba;
    std::vector<std::size_t> fold_of;  // fold that held out each row
    FoldAssignment folds;
};

// Out-of-sample probabilities: fold models are trained on the canonical
// view of the other folds (stratified by the given labels) and predict the
// held-out rows of every view in `views`.
CrossValResult cross_val_proba(const EmbeddingTensor& x, const LabelSet& y, const TrainConfig& cfg);

// Same, with caller-provided folds.
CrossValResult cross_val_proba(const EmbeddingTensor& x, const LabelSet& y, const TrainConfig& cfg,
                               FoldAssignment folds);

Matrix cross_val_proba(const Matrix& x, const LabelSet& y, const TrainConfig& cfg);

struct SgdConfig {
    std::size_t epochs = 50;
    double learning_rate = 0.1;
    std::size_t batch_size = 32;
    std::size_t num_checkpoints = 5;
    double l2_lambda = 1e-3;
};

struct Checkpoint {
    ProbeModel model;
    double learning_rate = 0.0;
    std::size_t epoch = 0;
};

using CheckpointTrail = std::vector<Checkpoint>;

// Mini-batch SGD on the probe objective, reshuffled every epoch with a fixed
// learning rate. Snapshot e (1-based) is taken after epoch ceil(e * epochs / K).
CheckpointTrail train_sgd_with_checkpoints(const Matrix& x, const LabelSet& y, const SgdConfig& cfg,
                                           RngStream& rng);

// Binary dump: "LSPM" | u32 version=1 | u32 C | u32 d | f64 lambda |
// C*d f64 weights (row-major) | C f64 biases. Little-endian throughout.
void save_probe(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load_probe(const std::filesystem::path& path);

}  // namespace semd
