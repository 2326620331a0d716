#pragma once

#include "semd/data.hpp"
#include "semd/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>

namespace semd {

struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::size_t n = 5000;
    std::size_t dim = 16;
    double separation = 10.0;  // distance of each center from the origin
    double noise_std = 1.0;    // isotropic within-cluster noise
    std::size_t views = 1;     // views beyond the first are jittered copies
    double view_jitter = 0.5;  // std of the per-view Gaussian jitter
    std::uint64_t seed = 0;

    // Multi-label mode: x = sum_c y_c * center_c + noise.
    bool multi_label = false;
    double positive_rate = 0.3;
    // Optional C x C matrix. Diagonal entries override positive_rate per
    // class; entry (a, b) is the probability that b is switched on when a is
    // on, applied in class order after the independent draws.
    std::optional<Matrix> cooccurrence;

    void validate() const;
};

struct SyntheticSample {
    EmbeddingTensor x;
    LabelSet labels;              // single-label mode
    MultiLabelSet multi_labels;   // multi-label mode
};

// Cluster centers are drawn once from the seed; independent splits are then
// sampled by stream id so train/val/test share geometry.
class SyntheticGenerator {
public:
    explicit SyntheticGenerator(SyntheticSpec spec);

    const SyntheticSpec& spec() const noexcept { return spec_; }
    // C x d centers: uniform directions on the unit sphere scaled by separation.
    const Matrix& centers() const noexcept { return centers_; }

    SyntheticSample sample(std::size_t n, std::uint64_t stream_id) const;

private:
    SyntheticSpec spec_;
    Matrix centers_;
};

// spec.n examples from stream 0.
SyntheticSample generate_synthetic(const SyntheticSpec& spec);

}  // namespace semd
