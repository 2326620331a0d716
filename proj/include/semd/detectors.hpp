#pragma once

#include "semd/data.hpp"
#include "semd/probe.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace semd {

// Output of every detector. Higher score = more likely mislabeled. The
// ranking lists flagged examples first, each group by descending score with
// ties going to the lower index.
struct MislabelReport {
    std::vector<bool> flags;
    std::vector<double> scores;
    std::vector<std::size_t> ranking;
    std::string method;
    nlohmann::json params = nlohmann::json::object();

    std::size_t size() const noexcept { return flags.size(); }
    std::size_t num_flagged() const;
    std::vector<std::size_t> flagged_indices() const;
};

// Builds the ranking from flags and scores.
MislabelReport make_report(std::vector<bool> flags, std::vector<double> scores, std::string method,
                           nlohmann::json params = nlohmann::json::object());

// Tab-separated, header "index\tflag\tscore\trank\tmethod". rank is the
// 0-based position in the ranking. Scores are written with 17 significant
// digits so the file round-trips.
void write_report(const MislabelReport& report, const std::filesystem::path& path);
MislabelReport read_report(const std::filesystem::path& path);

// Multi-label variant: one binary report per class, serialized with an
// extra class column ("index\tclass\tflag\tscore\trank\tmethod").
void write_multilabel_report(const std::vector<MislabelReport>& per_class, const std::filesystem::path& path);
std::vector<MislabelReport> read_multilabel_report(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Confident learning

struct ClassThresholds {
    std::vector<double> t;       // mean self-confidence per class
    std::vector<bool> defined;   // false for classes with no given examples
};

struct ConfidentJoint {
    std::size_t num_classes = 0;
    std::vector<std::size_t> counts;  // C x C row-major; row = given, column = suggested
    std::size_t n_counted = 0;
    // Column each example was counted in, or -1 when no class cleared its threshold.
    std::vector<int> assignment;

    std::size_t operator()(std::size_t given, std::size_t suggested) const {
        return counts[given * num_classes + suggested];
    }
};

struct JointDistribution {
    Matrix q;  // C x C, sums to 1
};

enum class PruneMode { by_noise_rate, by_class };

std::string to_string(PruneMode mode);
PruneMode prune_mode_from_string(const std::string& s);

// Emits a warning for every class without examples.
ClassThresholds compute_thresholds(const Matrix& proba, const LabelSet& given);

ConfidentJoint confident_joint(const Matrix& proba, const LabelSet& given, const ClassThresholds& thresholds);

JointDistribution calibrate_joint(const ConfidentJoint& joint, const LabelSet& given);

// Number of examples to prune for the (given, suggested) pair.
std::size_t prune_count(std::size_t n, double joint_mass);

// by_noise_rate: for every off-diagonal (i, j) flag the prune_count(n, Q[i][j])
// label-i examples with the largest P[., j] - t[j].
// by_class: for every class i flag sum_{j != i} prune_count(n, Q[i][j])
// label-i examples with the lowest P[., i].
// Examples the confident joint counted on the diagonal are never flagged.
MislabelReport cl_prune(const Matrix& proba, const LabelSet& given, const ClassThresholds& thresholds,
                        const ConfidentJoint& joint, const JointDistribution& q, PruneMode mode);

struct ConfidentLearningResult {
    ClassThresholds thresholds;
    ConfidentJoint joint;
    JointDistribution q;
    MislabelReport report;
};

// thresholds -> confident joint -> calibration -> pruning.
ConfidentLearningResult confident_learning(const Matrix& proba, const LabelSet& given,
                                           PruneMode mode = PruneMode::by_noise_rate);

// Element-wise mean of equally shaped probability matrices. Uses a running
// mean, so identical views reproduce the input bit for bit.
Matrix aggregate_tta_probs(const std::vector<Matrix>& per_view);

struct SemdResult {
    Matrix proba;  // out-of-sample probabilities after TTA aggregation
    ConfidentLearningResult cl;
};

// Cross-validated probe probabilities (averaged over views when tta is set)
// fed through confident learning.
SemdResult run_semd(const EmbeddingTensor& x, const LabelSet& given, const TrainConfig& cfg, bool tta,
                    PruneMode mode = PruneMode::by_noise_rate);

MislabelReport detect_confident_learning(const EmbeddingTensor& x, const LabelSet& given, const TrainConfig& cfg,
                                         bool tta, PruneMode mode = PruneMode::by_noise_rate);

// ---------------------------------------------------------------------------
// kNN soft-label voting

enum class KnnWeighting { similarity, uniform };

struct KnnConfig {
    std::size_t k = 10;
    std::size_t rounds = 21;  // M; must be odd
    KnnWeighting weighting = KnnWeighting::similarity;
    std::size_t jobs = 1;

    void validate() const;
};

// Round m uses view m mod V. Each round L2-normalizes the view, takes the k
// most cosine-similar other examples, and votes "mislabeled" when the
// weighted label histogram's argmax differs from the given label. Flag when
// votes > M/2; score = vote fraction.
MislabelReport detect_knn(const EmbeddingTensor& x, const LabelSet& given, const KnnConfig& cfg);

// ---------------------------------------------------------------------------
// TracIn self-influence for the linear probe

// sum over checkpoints of lr_t * ||p_t(x) - onehot(y)||^2 * (||x||^2 + 1),
// the squared norm of the per-example loss gradient w.r.t. (W, b).
std::vector<double> tracin_self_influence(const CheckpointTrail& trail, const Matrix& x, const LabelSet& given);

// Flags the flag_count examples with the largest self-influence.
MislabelReport detect_tracin_linear(const CheckpointTrail& trail, const Matrix& x, const LabelSet& given,
                                    std::size_t flag_count);

// ---------------------------------------------------------------------------
// Zero-shot similarity

// s[i, c] = cosine(x_i, class_c), averaged over views when tta is set. Flags
// examples whose most similar class differs from the given label; score =
// s[i, best] - s[i, given].
MislabelReport detect_zero_shot(const EmbeddingTensor& x, const Matrix& class_embeddings, const LabelSet& given,
                                bool tta);

}  // namespace semd
