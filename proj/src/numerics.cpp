#include "semd/numerics.hpp"

#include "semd/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>

namespace semd {

// ---------------------------------------------------------------------------
// common.hpp

namespace {

std::string join_violations(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += "; ";
        out += v[i];
    }
    return out;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

WarningSink& sink_storage() {
    static WarningSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return sink;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

void warn(std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (sink_storage()) sink_storage()(message);
}

WarningSink set_warning_sink(WarningSink sink) {
    std::lock_guard lock(sink_mutex());
    auto old = std::move(sink_storage());
    sink_storage() = std::move(sink);
    return old;
}

std::size_t default_jobs() {
    auto hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs == 0) jobs = default_jobs();
    jobs = std::min(jobs, count);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw InvalidInput("Matrix: data length " + std::to_string(data_.size()) + " != " +
                           std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw InvalidInput("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// RngStream

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double RngStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::uniform_index(std::size_t n) {
    if (n == 0) throw InvalidInput("uniform_index: empty range");
    if (n == 1) return 0;
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    // Largest multiple of bound that fits; reject above it.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % bound + 1) % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x > limit);
    return static_cast<std::size_t>(x % bound);
}

double RngStream::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::split(std::uint64_t stream_id) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(stream_id + 1)));
}

// ---------------------------------------------------------------------------
// Kernels

Matrix softmax_rows(const Matrix& logits) {
    if (!logits.all_finite()) throw InvalidInput("softmax_rows: non-finite logits");
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto in = logits.row(r);
        auto dst = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            dst[c] = std::exp(in[c] - mx);
            sum += dst[c];
        }
        for (auto& v : dst) v /= sum;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) {
    return dot(a, a);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InvalidInput("cosine_similarity: dimension mismatch");
    const double na = squared_norm(a);
    const double nb = squared_norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine_similarity: zero vector");
    return std::clamp(dot(a, b) / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::size_t argmax_row(std::span<const double> row) {
    if (row.empty()) throw InvalidInput("argmax_row: empty row");
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i) {
        if (row[i] > row[best]) best = i;
    }
    return best;
}

FoldAssignment kfold_indices(std::size_t n, std::size_t k,
                             std::optional<std::span<const int>> stratify_labels, RngStream& rng) {
    if (k < 2 || k > n) {
        throw InvalidInput("kfold_indices: need 2 <= k <= n (k=" + std::to_string(k) +
                           ", n=" + std::to_string(n) + ")");
    }
    FoldAssignment out;
    std::vector<std::size_t> order;
    order.reserve(n);

    if (!stratify_labels) {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
    } else {
        const auto labels = *stratify_labels;
        if (labels.size() != n) throw InvalidInput("kfold_indices: label count != n");
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
        std::vector<std::size_t> pooled;
        for (auto& [cls, members] : by_class) {
            if (members.size() < k) {
                out.warnings.push_back("class " + std::to_string(cls) + " has " +
                                       std::to_string(members.size()) + " < " + std::to_string(k) +
                                       " members; assigned to folds unstratified");
                pooled.insert(pooled.end(), members.begin(), members.end());
                continue;
            }
            rng.shuffle(members);
            order.insert(order.end(), members.begin(), members.end());
        }
        rng.shuffle(pooled);
        order.insert(order.end(), pooled.begin(), pooled.end());
    }

    // Consecutive positions go to consecutive folds, so any contiguous block
    // of `order` (one class) spreads with counts differing by at most one.
    out.folds.assign(k, {});
    for (std::size_t p = 0; p < n; ++p) out.folds[p % k].push_back(order[p]);
    for (auto& f : out.folds) std::sort(f.begin(), f.end());
    for (const auto& w : out.warnings) warn(w);
    return out;
}

}  // namespace semd
