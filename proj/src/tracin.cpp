#include "semd/common.hpp"
#include "semd/detectors.hpp"

namespace semd {

std::vector<double> tracin_self_influence(const CheckpointTrail& trail, const Matrix& x, const LabelSet& given) {
    if (trail.empty()) throw InvalidInput("tracin: empty checkpoint trail");
    if (x.rows() != given.size()) throw InvalidInput("tracin: row/label count mismatch");
    given.validate();
    std::vector<double> influence(x.rows(), 0.0);
    for (const auto& ckpt : trail) {
        if (ckpt.model.num_classes() != given.num_classes) throw InvalidInput("tracin: checkpoint class count");
        const Matrix p = predict_proba(ckpt.model, x);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double residual = 0.0;
            for (std::size_t c = 0; c < p.cols(); ++c) {
                const double r = p(i, c) - (static_cast<int>(c) == given[i] ? 1.0 : 0.0);
                residual += r * r;
            }
            // Gradient of the loss w.r.t. row c of W is r_c * x and w.r.t. b_c
            // is r_c, so the squared norm factors into |r|^2 (|x|^2 + 1).
            influence[i] += ckpt.learning_rate * residual * (squared_norm(x.row(i)) + 1.0);
        }
    }
    return influence;
}

MislabelReport detect_tracin_linear(const CheckpointTrail& trail, const Matrix& x, const LabelSet& given,
                                    std::size_t flag_count) {
    if (flag_count > x.rows()) throw InvalidInput("tracin: flag_count exceeds n");
    auto influence = tracin_self_influence(trail, x, given);
    // Rank by influence alone, then flag the head.
    auto ranked = make_report(std::vector<bool>(x.rows(), false), influence, "tracin");
    std::vector<bool> flags(x.rows(), false);
    for (std::size_t k = 0; k < flag_count; ++k) flags[ranked.ranking[k]] = true;
    return make_report(std::move(flags), std::move(influence), "tracin",
                       {{"checkpoints", trail.size()}, {"flag_count", flag_count}});
}

}  // namespace semd
