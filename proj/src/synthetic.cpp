#include "semd/synthetic.hpp"

#include "semd/common.hpp"

#include <cmath>
#include <string>

namespace semd {

void SyntheticSpec::validate() const {
    std::vector<std::string> bad;
    if (num_classes < 2) bad.push_back("num_classes must be >= 2");
    if (dim == 0) bad.push_back("dim must be positive");
    if (!(separation > 0.0)) bad.push_back("separation must be positive");
    if (!(noise_std >= 0.0)) bad.push_back("noise_std must be >= 0");
    if (views == 0) bad.push_back("views must be >= 1");
    if (!(view_jitter >= 0.0)) bad.push_back("view_jitter must be >= 0");
    if (!(positive_rate >= 0.0 && positive_rate <= 1.0)) bad.push_back("positive_rate must be in [0,1]");
    if (cooccurrence && (cooccurrence->rows() != num_classes || cooccurrence->cols() != num_classes)) {
        bad.push_back("cooccurrence must be C x C");
    }
    if (!bad.empty()) throw ValidationError(std::move(bad));
}

SyntheticGenerator::SyntheticGenerator(SyntheticSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    RngStream rng = RngStream(spec_.seed).split(0);
    centers_ = Matrix(spec_.num_classes, spec_.dim);
    for (std::size_t c = 0; c < spec_.num_classes; ++c) {
        auto row = centers_.row(c);
        double norm = 0.0;
        do {
            for (auto& v : row) v = rng.normal();
            norm = std::sqrt(squared_norm(row));
        } while (norm == 0.0);
        for (auto& v : row) v *= spec_.separation / norm;
    }
}

SyntheticSample SyntheticGenerator::sample(std::size_t n, std::uint64_t stream_id) const {
    RngStream rng = RngStream(spec_.seed).split(1000 + stream_id);
    const std::size_t C = spec_.num_classes;
    const std::size_t d = spec_.dim;
    SyntheticSample out;
    Matrix base(n, d);

    if (!spec_.multi_label) {
        // Balanced classes, shuffled.
        out.labels.num_classes = C;
        out.labels.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.labels.labels[i] = static_cast<int>(i % C);
        rng.shuffle(out.labels.labels);
        for (std::size_t i = 0; i < n; ++i) {
            auto center = centers_.row(static_cast<std::size_t>(out.labels[i]));
            auto row = base.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] = center[j] + spec_.noise_std * rng.normal();
        }
    } else {
        out.multi_labels = MultiLabelSet(n, C);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < C; ++c) {
                const double rate = spec_.cooccurrence ? (*spec_.cooccurrence)(c, c) : spec_.positive_rate;
                out.multi_labels.set(i, c, rng.bernoulli(rate));
            }
            if (spec_.cooccurrence) {
                for (std::size_t a = 0; a < C; ++a) {
                    if (!out.multi_labels(i, a)) continue;
                    for (std::size_t b = 0; b < C; ++b) {
                        if (b != a && !out.multi_labels(i, b) && rng.bernoulli((*spec_.cooccurrence)(a, b))) {
                            out.multi_labels.set(i, b, true);
                        }
                    }
                }
            }
            auto row = base.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] = spec_.noise_std * rng.normal();
            for (std::size_t c = 0; c < C; ++c) {
                if (!out.multi_labels(i, c)) continue;
                auto center = centers_.row(c);
                for (std::size_t j = 0; j < d; ++j) row[j] += center[j];
            }
        }
    }

    out.x.views.push_back(base);
    for (std::size_t v = 1; v < spec_.views; ++v) {
        Matrix view = base;
        for (auto& value : view.data()) value += spec_.view_jitter * rng.normal();
        out.x.views.push_back(std::move(view));
    }
    return out;
}

SyntheticSample generate_synthetic(const SyntheticSpec& spec) {
    return SyntheticGenerator(spec).sample(spec.n, 0);
}

}  // namespace semd
