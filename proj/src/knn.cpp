#include "semd/common.hpp"
#include "semd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace semd {

void KnnConfig::validate() const {
    if (k == 0) throw InvalidInput("knn: k must be >= 1");
    if (rounds == 0 || rounds % 2 == 0) throw InvalidInput("knn: rounds must be odd and >= 1");
}

namespace {

Matrix l2_normalized(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        const double norm = std::sqrt(squared_norm(row));
        if (norm == 0.0) throw DegenerateInput("knn: zero embedding at row " + std::to_string(i));
        for (auto& v : row) v /= norm;
    }
    return out;
}

// One voting round on one view: true where the neighbor vote disagrees with
// the given label.
std::vector<bool> knn_round(const Matrix& view, const LabelSet& given, const KnnConfig& cfg) {
    const Matrix unit = l2_normalized(view);
    const std::size_t n = unit.rows();
    const std::size_t C = given.num_classes;
    std::vector<bool> votes(n, false);
    parallel_for(n, cfg.jobs, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> sims;
        sims.reserve(n - 1);
        auto xi = unit.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sims.emplace_back(std::clamp(dot(xi, unit.row(j)), -1.0, 1.0), j);
        }
        const auto k = static_cast<std::ptrdiff_t>(cfg.k);
        std::partial_sort(sims.begin(), sims.begin() + k, sims.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<double> soft(C, 0.0);
        for (std::ptrdiff_t r = 0; r < k; ++r) {
            const auto [sim, j] = sims[static_cast<std::size_t>(r)];
            soft[static_cast<std::size_t>(given[j])] += cfg.weighting == KnnWeighting::similarity ? sim : 1.0;
        }
        votes[i] = static_cast<int>(argmax_row(soft)) != given[i];
    });
    return votes;
}

}  // namespace

MislabelReport detect_knn(const EmbeddingTensor& x, const LabelSet& given, const KnnConfig& cfg) {
    cfg.validate();
    x.validate();
    given.validate();
    const std::size_t n = x.rows();
    if (given.size() != n) throw InvalidInput("knn: row/label count mismatch");
    if (cfg.k >= n) throw InvalidInput("knn: k=" + std::to_string(cfg.k) + " must be < n=" + std::to_string(n));

    // Rounds cycle over the available views; each distinct view is evaluated
    // once and its vote counted for every round that uses it.
    const std::size_t V = x.num_views();
    std::vector<std::size_t> votes(n, 0);
    for (std::size_t v = 0; v < std::min(V, cfg.rounds); ++v) {
        std::size_t uses = 0;
        for (std::size_t m = 0; m < cfg.rounds; ++m) uses += (m % V == v) ? 1 : 0;
        const auto round = knn_round(x.views[v], given, cfg);
        for (std::size_t i = 0; i < n; ++i) {
            if (round[i]) votes[i] += uses;
        }
    }

    std::vector<bool> flags(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        flags[i] = 2 * votes[i] > cfg.rounds;
        scores[i] = static_cast<double>(votes[i]) / static_cast<double>(cfg.rounds);
    }
    return make_report(std::move(flags), std::move(scores), "knn",
                       {{"k", cfg.k},
                        {"rounds", cfg.rounds},
                        {"views", V},
                        {"weighting", cfg.weighting == KnnWeighting::similarity ? "similarity" : "uniform"}});
}

}  // namespace semd
