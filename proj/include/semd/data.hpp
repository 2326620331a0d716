#pragma once

#include "semd/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace semd {

// Single-label class indices in [0, num_classes).
struct LabelSet {
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    int operator[](std::size_t i) const { return labels[i]; }
    std::span<const int> view() const noexcept { return labels; }

    // Throws InvalidInput on an out-of-range label.
    void validate() const;
    std::vector<std::size_t> class_counts() const;

    friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

LabelSet select_labels(const LabelSet& y, std::span<const std::size_t> rows);

// n x C binary presence matrix. Rows may be all zero.
class MultiLabelSet {
public:
    MultiLabelSet() = default;
    MultiLabelSet(std::size_t n, std::size_t num_classes)
        : n_(n), classes_(num_classes), values_(n * num_classes, 0) {}

    std::size_t size() const noexcept { return n_; }
    std::size_t num_classes() const noexcept { return classes_; }

    std::uint8_t operator()(std::size_t i, std::size_t c) const { return values_[i * classes_ + c]; }
    void set(std::size_t i, std::size_t c, bool v) { values_[i * classes_ + c] = v ? 1 : 0; }

    // Column c as a two-class LabelSet.
    LabelSet column(std::size_t c) const;

    friend bool operator==(const MultiLabelSet&, const MultiLabelSet&) = default;

private:
    std::size_t n_ = 0;
    std::size_t classes_ = 0;
    std::vector<std::uint8_t> values_;
};

MultiLabelSet select_labels(const MultiLabelSet& y, std::span<const std::size_t> rows);

// V views of n x d embeddings. View 0 is the canonical, unaugmented one.
struct EmbeddingTensor {
    std::vector<Matrix> views;

    std::size_t num_views() const noexcept { return views.size(); }
    std::size_t rows() const noexcept { return views.empty() ? 0 : views.front().rows(); }
    std::size_t dim() const noexcept { return views.empty() ? 0 : views.front().cols(); }
    const Matrix& canonical() const { return views.front(); }

    // Throws InvalidInput unless every view has the same shape and all values are finite.
    void validate() const;

    friend bool operator==(const EmbeddingTensor&, const EmbeddingTensor&) = default;
};

EmbeddingTensor select_rows(const EmbeddingTensor& x, std::span<const std::size_t> rows);

}  // namespace semd
