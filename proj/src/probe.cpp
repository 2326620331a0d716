#include "semd/probe.hpp"

#include "binary_io.hpp"
#include "semd/common.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace semd {

void TrainConfig::validate() const {
    std::vector<std::string> bad;
    if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) bad.push_back("l2_lambda must be >= 0");
    if (max_iterations == 0) bad.push_back("max_iterations must be positive");
    if (!(gradient_tolerance > 0.0)) bad.push_back("gradient_tolerance must be positive");
    if (lbfgs_memory == 0) bad.push_back("lbfgs_memory must be positive");
    if (cv_folds < 2) bad.push_back("cv_folds must be >= 2");
    if (!bad.empty()) {
        std::string msg = "TrainConfig: ";
        for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
        throw InvalidInput(msg);
    }
}

ProbeModel ProbeModel::zeros(std::size_t num_classes, std::size_t dim, double l2_lambda) {
    return {Matrix(num_classes, dim), std::vector<double>(num_classes, 0.0), l2_lambda};
}

std::vector<double> flatten(const ProbeModel& model) {
    std::vector<double> p(model.weights.data().begin(), model.weights.data().end());
    p.insert(p.end(), model.biases.begin(), model.biases.end());
    return p;
}

ProbeModel unflatten(std::span<const double> params, std::size_t num_classes, std::size_t dim,
                     double l2_lambda) {
    if (params.size() != num_classes * (dim + 1)) throw InvalidInput("unflatten: parameter count");
    const std::size_t nw = num_classes * dim;
    ProbeModel m;
    m.weights = Matrix(num_classes, dim, std::vector<double>(params.begin(), params.begin() + nw));
    m.biases.assign(params.begin() + nw, params.end());
    m.l2_lambda = l2_lambda;
    return m;
}

namespace {

// logits = W x + b for one example, then converted in place to probabilities.
// Returns log-sum-exp of the logits.
double softmax_example(std::span<const double> params, std::size_t classes, std::size_t dim,
                       std::span<const double> x, std::span<double> out) {
    const double* w = params.data();
    const double* b = params.data() + classes * dim;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c) {
        double z = b[c];
        const double* wc = w + c * dim;
        for (std::size_t j = 0; j < dim; ++j) z += wc[j] * x[j];
        out[c] = z;
        mx = std::max(mx, z);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        out[c] = std::exp(out[c] - mx);
        sum += out[c];
    }
    for (std::size_t c = 0; c < classes; ++c) out[c] /= sum;
    return mx + std::log(sum);
}

void check_training_inputs(const Matrix& x, const LabelSet& y, const char* where) {
    if (x.rows() != y.size()) {
        throw InvalidInput(std::string(where) + ": " + std::to_string(x.rows()) + " rows but " +
                           std::to_string(y.size()) + " labels");
    }
    if (y.num_classes < 2) throw InvalidInput(std::string(where) + ": need at least 2 classes");
    if (x.cols() == 0) throw InvalidInput(std::string(where) + ": zero-dimensional embeddings");
    if (!x.all_finite()) throw InvalidInput(std::string(where) + ": non-finite embeddings");
    y.validate();
    const auto counts = y.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw MissingClass(c, where);
    }
}

}  // namespace

ProbeObjective::ProbeObjective(const Matrix& x, const LabelSet& y, double l2_lambda)
    : x_(x), y_(y), lambda_(l2_lambda), classes_(y.num_classes), dim_(x.cols()) {}

double ProbeObjective::operator()(std::span<const double> params, std::span<double> grad) const {
    const std::size_t n = x_.rows();
    const std::size_t nw = classes_ * dim_;
    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> p(classes_);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = x_.row(i);
        const auto yi = static_cast<std::size_t>(y_[i]);
        const double lse = softmax_example(params, classes_, dim_, xi, p);
        double zy = params[nw + yi];
        for (std::size_t j = 0; j < dim_; ++j) zy += params[yi * dim_ + j] * xi[j];
        loss += lse - zy;
        p[yi] -= 1.0;
        for (std::size_t c = 0; c < classes_; ++c) {
            const double r = p[c];
            if (r == 0.0) continue;
            double* gc = grad.data() + c * dim_;
            for (std::size_t j = 0; j < dim_; ++j) gc[j] += r * xi[j];
            grad[nw + c] += r;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double penalty = 0.0;
    for (std::size_t k = 0; k < nw; ++k) {
        grad[k] = grad[k] * inv_n + lambda_ * params[k];
        penalty += params[k] * params[k];
    }
    for (std::size_t c = 0; c < classes_; ++c) grad[nw + c] *= inv_n;
    return loss * inv_n + 0.5 * lambda_ * penalty;
}

double ProbeObjective::value(std::span<const double> params) const {
    std::vector<double> g(num_params());
    return (*this)(params, g);
}

ProbeFit fit_probe(const Matrix& x, const LabelSet& y, const TrainConfig& cfg,
                   const std::optional<ProbeModel>& initial) {
    cfg.validate();
    check_training_inputs(x, y, "train_probe");
    const std::size_t classes = y.num_classes;
    const std::size_t dim = x.cols();

    std::vector<double> x0(classes * (dim + 1), 0.0);
    if (initial) {
        if (initial->num_classes() != classes || initial->dim() != dim) {
            throw InvalidInput("train_probe: initial model shape mismatch");
        }
        x0 = flatten(*initial);
    }

    ProbeObjective objective(x, y, cfg.l2_lambda);
    LbfgsOptions opt;
    opt.max_iterations = cfg.max_iterations;
    opt.gradient_tolerance = cfg.gradient_tolerance;
    opt.memory = cfg.lbfgs_memory;
    auto res = minimize_lbfgs([&](std::span<const double> p, std::span<double> g) { return objective(p, g); },
                              std::move(x0), opt);

    ProbeFit fit;
    fit.model = unflatten(res.x, classes, dim, cfg.l2_lambda);
    fit.objective = res.value;
    fit.iterations = res.iterations;
    fit.status = res.status;
    fit.objective_history = std::move(res.value_history);
    return fit;
}

ProbeModel train_probe(const Matrix& x, const LabelSet& y, const TrainConfig& cfg) {
    return fit_probe(x, y, cfg).model;
}

Matrix predict_proba(const ProbeModel& model, const Matrix& x) {
    if (x.cols() != model.dim()) {
        throw InvalidInput("predict_proba: embedding dim " + std::to_string(x.cols()) +
                           " != model dim " + std::to_string(model.dim()));
    }
    const auto params = flatten(model);
    Matrix out(x.rows(), model.num_classes());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        softmax_example(params, model.num_classes(), model.dim(), x.row(i), out.row(i));
    }
    return out;
}

CrossValResult cross_val_proba(const EmbeddingTensor& x, const LabelSet& y, const TrainConfig& cfg) {
    cfg.validate();
    if (x.rows() != y.size()) throw InvalidInput("cross_val_proba: row/label count mismatch");
    RngStream rng = RngStream(cfg.seed).split(0x6b666f6c64ULL);  // "kfold"
    auto folds = kfold_indices(x.rows(), cfg.cv_folds, y.view(), rng);
    return cross_val_proba(x, y, cfg, std::move(folds));
}

CrossValResult cross_val_proba(const EmbeddingTensor& x, const LabelSet& y, const TrainConfig& cfg,
                               FoldAssignment folds) {
    cfg.validate();
    x.validate();
    const std::size_t n = x.rows();
    if (n != y.size()) throw InvalidInput("cross_val_proba: row/label count mismatch");

    CrossValResult out;
    out.fold_of.assign(n, folds.folds.size());
    for (std::size_t f = 0; f < folds.folds.size(); ++f) {
        for (auto i : folds.folds[f]) {
            if (i >= n || out.fold_of[i] != folds.folds.size()) {
                throw InvalidInput("cross_val_proba: folds are not a partition of the rows");
            }
            out.fold_of[i] = f;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (out.fold_of[i] == folds.folds.size()) throw InvalidInput("cross_val_proba: row not in any fold");
    }

    out.view_proba.assign(x.num_views(), Matrix(n, y.num_classes));
    parallel_for(folds.folds.size(), cfg.jobs, [&](std::size_t f) {
        const auto& held_out = folds.folds[f];
        std::vector<std::size_t> train_rows;
        train_rows.reserve(n - held_out.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (out.fold_of[i] != f) train_rows.push_back(i);
        }
        const Matrix xtr = select_rows(x.canonical(), train_rows);
        const LabelSet ytr = select_labels(y, train_rows);
        const ProbeModel model = train_probe(xtr, ytr, cfg);
        for (std::size_t v = 0; v < x.num_views(); ++v) {
            const Matrix p = predict_proba(model, select_rows(x.views[v], held_out));
            // Each fold writes a disjoint set of rows.
            for (std::size_t r = 0; r < held_out.size(); ++r) {
                auto src = p.row(r);
                std::copy(src.begin(), src.end(), out.view_proba[v].row(held_out[r]).begin());
            }
        }
    });
    out.folds = std::move(folds);
    return out;
}

Matrix cross_val_proba(const Matrix& x, const LabelSet& y, const TrainConfig& cfg) {
    EmbeddingTensor t{{x}};
    return std::move(cross_val_proba(t, y, cfg).view_proba.front());
}

CheckpointTrail train_sgd_with_checkpoints(const Matrix& x, const LabelSet& y, const SgdConfig& cfg,
                                           RngStream& rng) {
    if (!(cfg.learning_rate > 0.0)) throw InvalidInput("train_sgd: learning rate must be positive");
    if (cfg.num_checkpoints == 0 || cfg.epochs < cfg.num_checkpoints) {
        throw InvalidInput("train_sgd: need epochs >= num_checkpoints >= 1");
    }
    if (cfg.batch_size == 0) throw InvalidInput("train_sgd: batch size must be positive");
    check_training_inputs(x, y, "train_sgd");

    const std::size_t n = x.rows();
    const std::size_t classes = y.num_classes;
    const std::size_t dim = x.cols();
    const std::size_t nw = classes * dim;
    std::vector<double> params(classes * (dim + 1), 0.0);
    std::vector<double> grad(params.size());
    std::vector<double> p(classes);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<std::size_t> snapshot_epochs;
    for (std::size_t e = 1; e <= cfg.num_checkpoints; ++e) {
        snapshot_epochs.push_back((e * cfg.epochs + cfg.num_checkpoints - 1) / cfg.num_checkpoints);
    }

    CheckpointTrail trail;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                auto xi = x.row(i);
                softmax_example(params, classes, dim, xi, p);
                p[static_cast<std::size_t>(y[i])] -= 1.0;
                for (std::size_t c = 0; c < classes; ++c) {
                    for (std::size_t j = 0; j < dim; ++j) grad[c * dim + j] += p[c] * xi[j];
                    grad[nw + c] += p[c];
                }
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (std::size_t k = 0; k < params.size(); ++k) {
                double g = grad[k] * inv;
                if (k < nw) g += cfg.l2_lambda * params[k];
                params[k] -= cfg.learning_rate * g;
            }
        }
        if (std::find(snapshot_epochs.begin(), snapshot_epochs.end(), epoch) != snapshot_epochs.end()) {
            trail.push_back({unflatten(params, classes, dim, cfg.l2_lambda), cfg.learning_rate, epoch});
        }
    }
    return trail;
}

namespace {
constexpr char kProbeMagic[4] = {'L', 'S', 'P', 'M'};
constexpr std::uint32_t kProbeVersion = 1;
}  // namespace

void save_probe(const ProbeModel& model, const std::filesystem::path& path) {
    std::vector<unsigned char> buf(kProbeMagic, kProbeMagic + 4);
    detail::put_le<std::uint32_t>(buf, kProbeVersion);
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(model.num_classes()));
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(model.dim()));
    detail::put_le<double>(buf, model.l2_lambda);
    for (double w : model.weights.data()) detail::put_le<double>(buf, w);
    for (double b : model.biases) detail::put_le<double>(buf, b);
    detail::write_file_bytes(path, buf);
}

ProbeModel load_probe(const std::filesystem::path& path) {
    const auto buf = detail::read_file_bytes(path);
    constexpr std::size_t header = 4 + 4 + 4 + 4 + 8;
    if (buf.size() < header) throw FormatError(path.string() + ": truncated probe header");
    if (!std::equal(kProbeMagic, kProbeMagic + 4, buf.begin())) throw FormatError(path.string() + ": bad magic");
    const auto version = detail::get_le<std::uint32_t>(buf.data() + 4);
    if (version != kProbeVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
    const std::size_t classes = detail::get_le<std::uint32_t>(buf.data() + 8);
    const std::size_t dim = detail::get_le<std::uint32_t>(buf.data() + 12);
    const double lambda = detail::get_le<double>(buf.data() + 16);
    const std::size_t expected = header + 8 * classes * (dim + 1);
    if (buf.size() != expected) {
        throw FormatError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(buf.size()));
    }
    std::vector<double> params(classes * (dim + 1));
    for (std::size_t k = 0; k < params.size(); ++k) params[k] = detail::get_le<double>(buf.data() + header + 8 * k);
    auto model = unflatten(params, classes, dim, lambda);
    if (!model.weights.all_finite()) throw FormatError(path.string() + ": non-finite weights");
    return model;
}

}  // namespace semd
