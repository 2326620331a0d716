#include "semd/common.hpp"
#include "semd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace semd {

// ---------------------------------------------------------------------------
// Reports

std::size_t MislabelReport::num_flagged() const {
    return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

std::vector<std::size_t> MislabelReport::flagged_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i]) out.push_back(i);
    }
    return out;
}

MislabelReport make_report(std::vector<bool> flags, std::vector<double> scores, std::string method,
                           nlohmann::json params) {
    if (flags.size() != scores.size()) throw InvalidInput("make_report: flags/scores length mismatch");
    MislabelReport r;
    r.ranking.resize(flags.size());
    std::iota(r.ranking.begin(), r.ranking.end(), std::size_t{0});
    std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](std::size_t a, std::size_t b) {
        if (flags[a] != flags[b]) return static_cast<bool>(flags[a]);
        return scores[a] > scores[b];
    });
    r.flags = std::move(flags);
    r.scores = std::move(scores);
    r.method = std::move(method);
    r.params = std::move(params);
    return r;
}

namespace {

std::string format_score(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        auto tab = line.find('\t', pos);
        out.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
        if (tab == std::string::npos) break;
        pos = tab + 1;
    }
    return out;
}

struct ReportRow {
    std::size_t index;
    std::size_t cls;
    bool flag;
    double score;
    std::size_t rank;
    std::string method;
};

std::vector<ReportRow> read_report_rows(const std::filesystem::path& path, bool with_class) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::vector<ReportRow> rows;
    const std::size_t fields = with_class ? 6 : 5;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (line.rfind("index\t", 0) == 0) continue;
        auto f = split_tabs(line);
        if (f.size() != fields) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(fields) + " fields, found " + std::to_string(f.size()));
        }
        try {
            ReportRow r;
            std::size_t k = 0;
            r.index = std::stoul(f[k++]);
            r.cls = with_class ? std::stoul(f[k++]) : 0;
            const auto flag = f[k++];
            if (flag != "0" && flag != "1") throw std::invalid_argument("flag");
            r.flag = flag == "1";
            r.score = std::stod(f[k++]);
            r.rank = std::stoul(f[k++]);
            r.method = f[k++];
            rows.push_back(std::move(r));
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed report row");
        }
    }
    return rows;
}

MislabelReport rows_to_report(const std::vector<ReportRow>& rows, const std::string& where) {
    const std::size_t n = rows.size();
    MislabelReport r;
    r.flags.assign(n, false);
    r.scores.assign(n, 0.0);
    r.ranking.assign(n, n);
    std::vector<bool> seen(n, false);
    for (const auto& row : rows) {
        if (row.index >= n || seen[row.index]) throw FormatError(where + ": indices are not 0..n-1");
        if (row.rank >= n || r.ranking[row.rank] != n) throw FormatError(where + ": ranks are not a permutation");
        seen[row.index] = true;
        r.flags[row.index] = row.flag;
        r.scores[row.index] = row.score;
        r.ranking[row.rank] = row.index;
        r.method = row.method;
    }
    return r;
}

}  // namespace

void write_report(const MislabelReport& report, const std::filesystem::path& path) {
    std::vector<std::size_t> rank_of(report.size());
    for (std::size_t r = 0; r < report.ranking.size(); ++r) rank_of[report.ranking[r]] = r;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "index\tflag\tscore\trank\tmethod\n";
    for (std::size_t i = 0; i < report.size(); ++i) {
        out << i << '\t' << (report.flags[i] ? 1 : 0) << '\t' << format_score(report.scores[i]) << '\t'
            << rank_of[i] << '\t' << report.method << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

MislabelReport read_report(const std::filesystem::path& path) {
    return rows_to_report(read_report_rows(path, false), path.string());
}

void write_multilabel_report(const std::vector<MislabelReport>& per_class, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "index\tclass\tflag\tscore\trank\tmethod\n";
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const auto& report = per_class[c];
        std::vector<std::size_t> rank_of(report.size());
        for (std::size_t r = 0; r < report.ranking.size(); ++r) rank_of[report.ranking[r]] = r;
        for (std::size_t i = 0; i < report.size(); ++i) {
            out << i << '\t' << c << '\t' << (report.flags[i] ? 1 : 0) << '\t' << format_score(report.scores[i])
                << '\t' << rank_of[i] << '\t' << report.method << '\n';
        }
    }
    if (!out) throw Error("write failed: " + path.string());
}

std::vector<MislabelReport> read_multilabel_report(const std::filesystem::path& path) {
    const auto rows = read_report_rows(path, true);
    std::map<std::size_t, std::vector<ReportRow>> by_class;
    for (const auto& r : rows) by_class[r.cls].push_back(r);
    std::vector<MislabelReport> out;
    for (const auto& [cls, class_rows] : by_class) {
        if (cls != out.size()) throw FormatError(path.string() + ": class ids are not contiguous");
        out.push_back(rows_to_report(class_rows, path.string()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Confident learning

std::string to_string(PruneMode mode) {
    return mode == PruneMode::by_noise_rate ? "prune_by_noise_rate" : "prune_by_class";
}

PruneMode prune_mode_from_string(const std::string& s) {
    if (s == "prune_by_noise_rate" || s == "noise-rate" || s == "noise_rate") return PruneMode::by_noise_rate;
    if (s == "prune_by_class" || s == "class" || s == "by-class") return PruneMode::by_class;
    throw InvalidInput("unknown prune mode '" + s + "'");
}

namespace {

void check_proba(const Matrix& proba, const LabelSet& given, const char* where) {
    if (proba.rows() != given.size()) throw InvalidInput(std::string(where) + ": row/label count mismatch");
    if (proba.cols() != given.num_classes) throw InvalidInput(std::string(where) + ": column count != num_classes");
    if (!proba.all_finite()) throw InvalidInput(std::string(where) + ": non-finite probabilities");
    given.validate();
}

}  // namespace

ClassThresholds compute_thresholds(const Matrix& proba, const LabelSet& given) {
    check_proba(proba, given, "compute_thresholds");
    const std::size_t C = given.num_classes;
    ClassThresholds out;
    out.t.assign(C, 0.0);
    out.defined.assign(C, false);
    std::vector<std::size_t> counts(C, 0);
    for (std::size_t i = 0; i < given.size(); ++i) {
        const auto y = static_cast<std::size_t>(given[i]);
        out.t[y] += proba(i, y);
        ++counts[y];
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) {
            warn("compute_thresholds: class " + std::to_string(c) +
                 " has no examples; excluded from confident counting");
            continue;
        }
        out.t[c] /= static_cast<double>(counts[c]);
        out.defined[c] = true;
    }
    return out;
}

ConfidentJoint confident_joint(const Matrix& proba, const LabelSet& given, const ClassThresholds& thresholds) {
    check_proba(proba, given, "confident_joint");
    const std::size_t C = given.num_classes;
    ConfidentJoint cj;
    cj.num_classes = C;
    cj.counts.assign(C * C, 0);
    cj.assignment.assign(given.size(), -1);
    for (std::size_t i = 0; i < given.size(); ++i) {
        int best = -1;
        for (std::size_t j = 0; j < C; ++j) {
            if (!thresholds.defined[j] || proba(i, j) < thresholds.t[j]) continue;
            if (best < 0 || proba(i, j) > proba(i, static_cast<std::size_t>(best))) best = static_cast<int>(j);
        }
        if (best < 0) continue;
        cj.assignment[i] = best;
        ++cj.counts[static_cast<std::size_t>(given[i]) * C + static_cast<std::size_t>(best)];
        ++cj.n_counted;
    }
    return cj;
}

JointDistribution calibrate_joint(const ConfidentJoint& joint, const LabelSet& given) {
    const std::size_t C = joint.num_classes;
    if (given.num_classes != C) throw InvalidInput("calibrate_joint: class count mismatch");
    const auto counts = given.class_counts();
    const double n = static_cast<double>(given.size());
    JointDistribution out{Matrix(C, C)};
    for (std::size_t i = 0; i < C; ++i) {
        const double target = static_cast<double>(counts[i]) / n;
        double row_sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) row_sum += static_cast<double>(joint(i, j));
        if (row_sum == 0.0) {
            out.q(i, i) = target;
            continue;
        }
        for (std::size_t j = 0; j < C; ++j) out.q(i, j) = static_cast<double>(joint(i, j)) * target / row_sum;
    }
    double total = 0.0;
    for (double v : out.q.data()) total += v;
    if (total > 0.0) {
        for (double& v : out.q.data()) v /= total;
    }
    return out;
}

std::size_t prune_count(std::size_t n, double joint_mass) {
    // Floor, with a little slack so that e.g. 4 * 0.25 computed as
    // 0.99999999999 still yields 1.
    const double raw = static_cast<double>(n) * joint_mass;
    return static_cast<std::size_t>(std::floor(raw + 1e-9));
}

MislabelReport cl_prune(const Matrix& proba, const LabelSet& given, const ClassThresholds& thresholds,
                        const ConfidentJoint& joint, const JointDistribution& q, PruneMode mode) {
    check_proba(proba, given, "cl_prune");
    const std::size_t n = given.size();
    const std::size_t C = given.num_classes;
    if (q.q.rows() != C || q.q.cols() != C) throw InvalidInput("cl_prune: joint distribution shape");
    if (joint.assignment.size() != n) throw InvalidInput("cl_prune: confident joint built for another dataset");

    // Candidates per given label: examples not counted on the diagonal.
    std::vector<std::vector<std::size_t>> candidates(C);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = given[i];
        if (joint.assignment[i] == y) continue;
        candidates[static_cast<std::size_t>(y)].push_back(i);
    }

    std::vector<bool> flags(n, false);
    auto flag_top = [&](std::vector<std::size_t> pool, std::size_t count, auto&& key) {
        // key(i) larger = pruned first; ties go to the lower index.
        count = std::min(count, pool.size());
        if (count == 0) return;
        std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count), pool.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double ka = key(a), kb = key(b);
                              if (ka != kb) return ka > kb;
                              return a < b;
                          });
        for (std::size_t k = 0; k < count; ++k) flags[pool[k]] = true;
    };

    for (std::size_t i = 0; i < C; ++i) {
        if (mode == PruneMode::by_noise_rate) {
            for (std::size_t j = 0; j < C; ++j) {
                if (j == i || !thresholds.defined[j]) continue;
                const auto count = prune_count(n, q.q(i, j));
                flag_top(candidates[i], count, [&](std::size_t e) { return proba(e, j) - thresholds.t[j]; });
            }
        } else {
            std::size_t count = 0;
            for (std::size_t j = 0; j < C; ++j) {
                if (j != i) count += prune_count(n, q.q(i, j));
            }
            flag_top(candidates[i], count, [&](std::size_t e) { return -proba(e, i); });
        }
    }

    std::vector<double> scores(n);
    for (std::size_t e = 0; e < n; ++e) scores[e] = 1.0 - proba(e, static_cast<std::size_t>(given[e]));
    return make_report(std::move(flags), std::move(scores), "cl", {{"mode", to_string(mode)}});
}

ConfidentLearningResult confident_learning(const Matrix& proba, const LabelSet& given, PruneMode mode) {
    ConfidentLearningResult r;
    r.thresholds = compute_thresholds(proba, given);
    r.joint = confident_joint(proba, given, r.thresholds);
    r.q = calibrate_joint(r.joint, given);
    r.report = cl_prune(proba, given, r.thresholds, r.joint, r.q, mode);
    return r;
}

Matrix aggregate_tta_probs(const std::vector<Matrix>& per_view) {
    if (per_view.empty()) throw InvalidInput("aggregate_tta_probs: no views");
    Matrix mean = per_view.front();
    for (std::size_t v = 1; v < per_view.size(); ++v) {
        const auto& m = per_view[v];
        if (m.rows() != mean.rows() || m.cols() != mean.cols()) {
            throw InvalidInput("aggregate_tta_probs: view " + std::to_string(v) + " shape mismatch");
        }
        const double inv = 1.0 / static_cast<double>(v + 1);
        auto dst = mean.data();
        auto src = m.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += (src[k] - dst[k]) * inv;
    }
    return mean;
}

SemdResult run_semd(const EmbeddingTensor& x, const LabelSet& given, const TrainConfig& cfg, bool tta,
                    PruneMode mode) {
    SemdResult out;
    if (tta) {
        if (x.num_views() == 1) warn("tta requested but only one view is available; TTA degenerates to a single view");
        auto cv = cross_val_proba(x, given, cfg);
        out.proba = aggregate_tta_probs(cv.view_proba);
    } else {
        EmbeddingTensor canonical{{x.canonical()}};
        auto cv = cross_val_proba(canonical, given, cfg);
        out.proba = std::move(cv.view_proba.front());
    }
    out.cl = confident_learning(out.proba, given, mode);
    out.cl.report.method = "cl";
    out.cl.report.params["tta"] = tta;
    out.cl.report.params["cv_folds"] = cfg.cv_folds;
    out.cl.report.params["l2_lambda"] = cfg.l2_lambda;
    out.cl.report.params["seed"] = cfg.seed;
    return out;
}

MislabelReport detect_confident_learning(const EmbeddingTensor& x, const LabelSet& given, const TrainConfig& cfg,
                                         bool tta, PruneMode mode) {
    return run_semd(x, given, cfg, tta, mode).cl.report;
}

}  // namespace semd
