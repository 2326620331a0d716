#include "semd/common.hpp"
#include "semd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace semd {

std::string to_string(Method m) {
    switch (m) {
        case Method::cl: return "cl";
        case Method::knn: return "knn";
        case Method::tracin: return "tracin";
        case Method::zeroshot: return "zeroshot";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    if (s == "cl" || s == "semd") return Method::cl;
    if (s == "knn") return Method::knn;
    if (s == "tracin") return Method::tracin;
    if (s == "zeroshot" || s == "zero-shot") return Method::zeroshot;
    throw InvalidInput("unknown method '" + s + "' (expected cl, knn, tracin or zeroshot)");
}

// ---------------------------------------------------------------------------
// SweepResult

namespace {

bool same_axis(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

template <class Field>
std::optional<double> mean_of(const std::vector<SweepRecord>& records, double axis, const std::string& method,
                              Field field) {
    double sum = 0.0;
    std::size_t k = 0;
    for (const auto& r : records) {
        if (r.method != method || !same_axis(r.axis, axis)) continue;
        if (auto v = field(r)) {
            sum += *v;
            ++k;
        }
    }
    if (k == 0) return std::nullopt;
    return sum / static_cast<double>(k);
}

std::string fmt(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(10) << *v;
    return os.str();
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> gain_of(const SweepRecord& r) {
    if (r.before && r.after) return *r.after - *r.before;
    return std::nullopt;
}

}  // namespace

std::optional<double> SweepResult::mean_f1(double axis, const std::string& method) const {
    return mean_of(records, axis, method, [](const SweepRecord& r) { return r.f1; });
}

std::optional<double> SweepResult::mean_after(double axis, const std::string& method) const {
    return mean_of(records, axis, method, [](const SweepRecord& r) { return r.after; });
}

std::optional<double> SweepResult::mean_gain(double axis, const std::string& method) const {
    return mean_of(records, axis, method, gain_of);
}

void SweepResult::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << axis_name << ",method,seed,f1,precision,recall,flagged,noised,before,after,gain,per_class,note\n";
    for (const auto& r : records) {
        std::string per_class;
        for (std::size_t c = 0; c < r.per_class.size(); ++c) {
            if (c) per_class += ';';
            per_class += std::isnan(r.per_class[c]) ? std::string("nan") : fmt(r.per_class[c]);
        }
        out << fmt(r.axis) << ',' << r.method << ',' << r.seed << ',' << fmt(r.f1) << ',' << fmt(r.precision) << ','
            << fmt(r.recall) << ',' << r.flagged << ',' << r.noised << ',' << fmt(r.before) << ',' << fmt(r.after)
            << ',' << fmt(gain_of(r)) << ',' << per_class << ',' << csv_escape(r.note) << '\n';
    }
}

nlohmann::json SweepResult::summary() const {
    // (axis, method) in first-seen order
    std::vector<std::pair<double, std::string>> keys;
    for (const auto& r : records) {
        const bool seen = std::any_of(keys.begin(), keys.end(), [&](const auto& k) {
            return k.second == r.method && same_axis(k.first, r.axis);
        });
        if (!seen) keys.emplace_back(r.axis, r.method);
    }
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [axis, method] : keys) {
        std::size_t seeds = 0;
        for (const auto& r : records) seeds += r.method == method && same_axis(r.axis, axis);
        cells.push_back({{axis_name, axis},
                         {"method", method},
                         {"seeds", seeds},
                         {"mean_f1", opt_json(mean_f1(axis, method))},
                         {"mean_after", opt_json(mean_after(axis, method))},
                         {"mean_gain", opt_json(mean_gain(axis, method))}});
    }
    return {{"axis", axis_name}, {"cells", cells}};
}

// ---------------------------------------------------------------------------
// Noise-level sweep

namespace {

NoiseResult inject_for_sweep(const SingleLabelData& data, const NoiseSweepConfig& cfg, double level,
                             std::uint64_t noise_seed, const TrainConfig& train) {
    switch (cfg.kind) {
        case NoiseKind::symmetric: return inject_symmetric(data.clean, level, noise_seed);
        case NoiseKind::asymmetric: return inject_asymmetric(data.clean, level, noise_seed);
        case NoiseKind::confidence_based:
            return inject_confidence_based(data.x.canonical(), data.clean, level, train, noise_seed);
        case NoiseKind::external_file: break;
    }
    throw InvalidInput("noise sweep: external label files cannot be swept");
}

}  // namespace

SweepResult sweep_noise_levels(const SingleLabelData& data, const NoiseSweepConfig& cfg) {
    data.x.validate();
    data.clean.validate();
    if (data.clean.size() != data.x.rows()) throw InvalidInput("noise sweep: row/label count mismatch");
    if (cfg.levels.empty()) throw InvalidInput("noise sweep: no levels");
    if (cfg.methods.empty()) throw InvalidInput("noise sweep: no methods");
    for (double l : cfg.levels) {
        if (!(l >= 0.0 && l <= 1.0)) throw InvalidInput("noise sweep: levels must lie in [0, 1]");
    }
    const bool wants_zs = std::find(cfg.methods.begin(), cfg.methods.end(), Method::zeroshot) != cfg.methods.end();
    if (wants_zs && !data.class_embeddings) throw InvalidInput("noise sweep: zeroshot needs class embeddings");
    if (cfg.retrain && (!data.eval_x || !data.eval_y)) throw InvalidInput("noise sweep: retraining needs an eval split");
    cfg.knn.validate();

    const std::size_t L = cfg.levels.size(), S = cfg.seeds.size(), M = cfg.methods.size();
    std::vector<SweepRecord> records(L * M * S);
    auto slot = [&](std::size_t l, std::size_t m, std::size_t s) -> SweepRecord& { return records[(l * M + m) * S + s]; };

    parallel_for(L * S, cfg.jobs, [&](std::size_t cell) {
        const std::size_t l = cell / S, s = cell % S;
        const double level = cfg.levels[l];
        const std::uint64_t seed = cfg.seeds[s];
        TrainConfig train = cfg.train;
        train.seed = seed;
        if (cfg.jobs != 1) train.jobs = 1;
        KnnConfig knn = cfg.knn;
        if (cfg.jobs != 1) knn.jobs = 1;

        for (std::size_t m = 0; m < M; ++m) {
            auto& r = slot(l, m, s);
            r.axis = level;
            r.method = to_string(cfg.methods[m]);
            r.seed = seed;
        }

        NoiseResult noise;
        try {
            noise = inject_for_sweep(data, cfg, level, splitmix64(seed ^ splitmix64(0x6e6f697365ULL + l)), train);
        } catch (const Error& e) {
            for (std::size_t m = 0; m < M; ++m) slot(l, m, s).note = e.what();
            return;
        }
        const auto noised = static_cast<std::size_t>(std::count(noise.noise_mask.begin(), noise.noise_mask.end(), true));

        std::optional<MislabelReport> cl_report;
        auto run_cl = [&]() -> const MislabelReport& {
            if (!cl_report) cl_report = detect_confident_learning(data.x, noise.noisy_labels, train, cfg.tta);
            return *cl_report;
        };

        for (std::size_t m = 0; m < M; ++m) {
            auto& r = slot(l, m, s);
            r.noised = noised;
            try {
                MislabelReport report;
                switch (cfg.methods[m]) {
                    case Method::cl: report = run_cl(); break;
                    case Method::knn: report = detect_knn(data.x, noise.noisy_labels, knn); break;
                    case Method::tracin: {
                        const auto cutoff = run_cl().num_flagged();
                        RngStream rng = RngStream(seed).split(0x747261636eULL);
                        SgdConfig sgd = cfg.sgd;
                        sgd.l2_lambda = train.l2_lambda;
                        const auto trail = train_sgd_with_checkpoints(data.x.canonical(), noise.noisy_labels, sgd, rng);
                        report = detect_tracin_linear(trail, data.x.canonical(), noise.noisy_labels, cutoff);
                        break;
                    }
                    case Method::zeroshot:
                        report = detect_zero_shot(data.x, *data.class_embeddings, noise.noisy_labels, cfg.tta);
                        break;
                }
                r.flagged = report.num_flagged();
                if (noised == 0) {
                    r.note = "no noised examples; F1 undefined";
                } else {
                    const auto score = detection_f1(report, noise.noise_mask);
                    r.f1 = score.f1;
                    r.precision = score.precision;
                    r.recall = score.recall;
                }
                if (cfg.retrain) {
                    const auto out = retrain_after_cleaning(data.x.canonical(), noise.noisy_labels,
                                                            report.flagged_indices(), train,
                                                            data.eval_x->canonical(), *data.eval_y);
                    r.before = out.before;
                    r.after = out.after;
                }
            } catch (const Error& e) {
                r.note = e.what();
                warn("noise sweep: level " + fmt(level) + ", " + r.method + ", seed " + std::to_string(seed) + ": " +
                     e.what());
            }
        }
    });
    return {"noise_level", std::move(records)};
}

// ---------------------------------------------------------------------------
// Fraction sweep

std::vector<std::size_t> stratified_subsample(std::span<const int> strata, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("subsample fraction must lie in (0, 1]");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(i);
    RngStream root(seed);
    std::vector<std::size_t> out;
    for (auto& [key, members] : groups) {
        auto rng = root.split(static_cast<std::uint64_t>(static_cast<std::uint32_t>(key)));
        rng.shuffle(members);
        const auto take = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
        out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> parse_range(const std::string& text) {
    auto number = [&](const std::string& s) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != s.size() || !std::isfinite(v)) {
            throw InvalidInput("bad number '" + s + "' in range '" + text + "'");
        }
        return v;
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        if (parts.size() != 3) throw InvalidInput("range '" + text + "' must be start:stop:step");
        const double a = number(parts[0]), b = number(parts[1]), step = number(parts[2]);
        if (!(step > 0.0) || b < a) throw InvalidInput("range '" + text + "' needs step > 0 and stop >= start");
        for (std::size_t k = 0;; ++k) {
            const double v = a + static_cast<double>(k) * step;
            if (v > b + 1e-9 * step) break;
            out.push_back(std::round(v * 1e12) / 1e12);
        }
        return out;
    }
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
    if (out.empty()) throw InvalidInput("empty range");
    return out;
}

namespace {

std::vector<int> label_row_strata(const MultiLabelSet& y) {
    std::map<std::vector<std::uint8_t>, int> ids;
    std::vector<int> strata(y.size());
    std::vector<std::uint8_t> row(y.num_classes());
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = y(i, c);
        auto [it, _] = ids.emplace(row, static_cast<int>(ids.size()));
        strata[i] = it->second;
    }
    return strata;
}

}  // namespace

SweepResult sweep_data_fractions(const MultiLabelData& data, const FractionSweepConfig& cfg) {
    const std::size_t C = data.y_train.num_classes();
    if (data.x_train.rows() != data.y_train.size() || data.x_val.rows() != data.y_val.size() ||
        data.x_test.rows() != data.y_test.size()) {
        throw InvalidInput("fraction sweep: row/label count mismatch");
    }
    if (data.y_val.num_classes() != C || data.y_test.num_classes() != C) {
        throw InvalidInput("fraction sweep: class count mismatch between splits");
    }
    if (cfg.fractions.empty() || cfg.strategies.empty()) throw InvalidInput("fraction sweep: nothing to sweep");
    for (const auto& s : cfg.strategies) {
        if (s != "none" && s != "per-image" && s != "per-label" && s != "optimal") {
            throw InvalidInput("fraction sweep: unknown strategy '" + s + "'");
        }
    }
    for (double f : cfg.fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw InvalidInput("fraction sweep: fractions must lie in (0, 1]");
    }
    const Matrix& x_eval = cfg.evaluate_on_validation ? data.x_val : data.x_test;
    const MultiLabelSet& y_eval = cfg.evaluate_on_validation ? data.y_val : data.y_test;
    const auto strata = label_row_strata(data.y_train);

    const std::size_t F = cfg.fractions.size(), S = cfg.seeds.size(), K = cfg.strategies.size();
    std::vector<SweepRecord> records(F * K * S);
    auto slot = [&](std::size_t f, std::size_t k, std::size_t s) -> SweepRecord& { return records[(f * K + k) * S + s]; };

    parallel_for(F * S, cfg.jobs, [&](std::size_t cell) {
        const std::size_t f = cell / S, s = cell % S;
        const double fraction = cfg.fractions[f];
        const std::uint64_t seed = cfg.seeds[s];
        TrainConfig train = cfg.train;
        train.seed = seed;
        if (cfg.jobs != 1) train.jobs = 1;
        for (std::size_t k = 0; k < K; ++k) {
            auto& r = slot(f, k, s);
            r.axis = fraction;
            r.method = cfg.strategies[k];
            r.seed = seed;
        }
        try {
            const auto rows = stratified_subsample(strata, fraction, splitmix64(seed ^ 0x66726163ULL));
            const Matrix x = select_rows(data.x_train, rows);
            const MultiLabelSet y = select_labels(data.y_train, rows);
            const auto analysis = analyze_multilabel(x, y, train);
            const auto baseline =
                multilabel_class_auc(x, y, RemovalPlan::empty(y.size(), C), train, x_eval, y_eval);

            for (std::size_t k = 0; k < K; ++k) {
                auto& r = slot(f, k, s);
                const auto& name = cfg.strategies[k];
                r.noised = y.size();
                try {
                    RemovalPlan plan;
                    if (name == "none") {
                        plan = RemovalPlan::empty(y.size(), C);
                    } else if (name == "per-label") {
                        plan = per_label_removal(analysis, y.size(), std::vector<double>(C, 1.0));
                    } else if (name == "per-image") {
                        plan = per_image_removal(analysis, y, std::nullopt, cfg.grid.tau);
                    } else {
                        plan = optimal_per_class_removal(analysis, x, y, data.x_val, data.y_val, cfg.grid, train).plan;
                    }
                    for (std::size_t c = 0; c < C; ++c) r.flagged += plan.removals_for_class(c);
                    r.per_class = name == "none" ? baseline : multilabel_class_auc(x, y, plan, train, x_eval, y_eval);
                    std::vector<double> b = baseline, a = r.per_class;
                    for (std::size_t c = 0; c < C; ++c) {
                        if (std::isnan(a[c]) || std::isnan(b[c])) a[c] = b[c] = std::nan("");
                    }
                    r.before = macro_average(b);
                    r.after = macro_average(a);
                } catch (const Error& e) {
                    r.note = e.what();
                    warn("fraction sweep: fraction " + fmt(fraction) + ", seed " + std::to_string(seed) + ", " + name +
                         ": " + e.what());
                }
            }
        } catch (const Error& e) {
            for (std::size_t k = 0; k < K; ++k) slot(f, k, s).note = e.what();
            warn("fraction sweep: fraction " + fmt(fraction) + ", seed " + std::to_string(seed) + ": " + e.what());
        }
    });
    return {"fraction", std::move(records)};
}

}  // namespace semd
