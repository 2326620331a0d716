#include "semd/common.hpp"
#include "semd/detectors.hpp"

namespace semd {

MislabelReport detect_zero_shot(const EmbeddingTensor& x, const Matrix& class_embeddings, const LabelSet& given,
                                bool tta) {
    x.validate();
    given.validate();
    const std::size_t n = x.rows();
    const std::size_t C = class_embeddings.rows();
    if (given.size() != n) throw InvalidInput("zero_shot: row/label count mismatch");
    if (C != given.num_classes) throw InvalidInput("zero_shot: class embedding count != num_classes");
    if (class_embeddings.cols() != x.dim()) throw InvalidInput("zero_shot: class embedding dim mismatch");

    for (std::size_t c = 0; c < C; ++c) {
        if (squared_norm(class_embeddings.row(c)) == 0.0) {
            throw DegenerateInput("zero_shot: class embedding " + std::to_string(c) + " is the zero vector");
        }
    }

    const std::size_t views = tta ? x.num_views() : 1;
    Matrix sim(n, C, 0.0);
    for (std::size_t v = 0; v < views; ++v) {
        const double inv = 1.0 / static_cast<double>(v + 1);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < C; ++c) {
                const double s = cosine_similarity(x.views[v].row(i), class_embeddings.row(c));
                sim(i, c) += (s - sim(i, c)) * inv;
            }
        }
    }

    std::vector<bool> flags(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto best = argmax_row(sim.row(i));
        const auto own = static_cast<std::size_t>(given[i]);
        flags[i] = best != own;
        scores[i] = sim(i, best) - sim(i, own);
    }
    return make_report(std::move(flags), std::move(scores), "zeroshot", {{"tta", tta}, {"views", views}});
}

}  // namespace semd
