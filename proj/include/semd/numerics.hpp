#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace semd {

// Dense row-major matrix of doubles. Embeddings, probe weights and probability
// matrices all live in this type.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Copies the listed rows, in order.
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

// Project-wide random stream: std::mt19937_64, whose output sequence is fixed
// by the C++ standard. Derived quantities use hand-written transforms (not the
// std distributions, which are implementation-defined) so draws are
// reproducible across standard libraries.
//
//   uniform()       = (next >> 11) * 2^-53
//   uniform_index() = rejection sampling on the top bits
//   normal()        = Box-Muller, cosine branch, one normal per two uniforms
//   split(id)       = fresh stream seeded with splitmix64(seed ^ splitmix64(id + 1))
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    std::size_t uniform_index(std::size_t n);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }
    RngStream split(std::uint64_t stream_id) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Row-wise softmax with max subtraction. Throws InvalidInput on non-finite input.
Matrix softmax_rows(const Matrix& logits);

// Clamped to [-1, 1]. Throws DegenerateInput on a zero vector and
// InvalidInput on a dimension mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Lowest index wins ties. Throws InvalidInput on an empty row.
std::size_t argmax_row(std::span<const double> row);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

struct FoldAssignment {
    std::vector<std::vector<std::size_t>> folds;  // each fold sorted ascending
    std::vector<std::string> warnings;
};

// Partitions {0..n-1} into k folds whose sizes differ by at most one. With
// stratification, every class with at least k members has per-fold counts
// differing by at most one; smaller classes are pooled and split unstratified.
FoldAssignment kfold_indices(std::size_t n, std::size_t k,
                             std::optional<std::span<const int>> stratify_labels, RngStream& rng);

}  // namespace semd
