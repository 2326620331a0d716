#include "semd/cli.hpp"

#include "semd/common.hpp"
#include "semd/dataio.hpp"
#include "semd/detectors.hpp"
#include "semd/eval.hpp"
#include "semd/multilabel.hpp"
#include "semd/noise.hpp"
#include "semd/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace semd {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Errors thrown once this is set map to exit code 2.
struct Phase {
    bool computing = false;
};

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

fs::path rel_to(const fs::path& target, const fs::path& dir) {
    const auto t = fs::weakly_canonical(fs::absolute(target));
    const auto d = fs::weakly_canonical(fs::absolute(dir));
    auto r = t.lexically_relative(d);
    return r.empty() ? t : r;
}

std::string rebase_path(const std::string& p, const fs::path& base, const fs::path& out) {
    if (p.empty()) return p;
    return rel_to(base / p, out).generic_string();
}

// The manifest with every path rewritten relative to `out`.
DatasetManifest rebase(const DatasetBundle& b, const fs::path& out) {
    DatasetManifest m = b.manifest;
    m.class_embeddings = rebase_path(m.class_embeddings, b.base_dir, out);
    for (auto& [name, s] : m.splits) {
        s.embeddings = rebase_path(s.embeddings, b.base_dir, out);
        s.labels = rebase_path(s.labels, b.base_dir, out);
        s.clean_labels = rebase_path(s.clean_labels, b.base_dir, out);
        s.noise_mask = rebase_path(s.noise_mask, b.base_dir, out);
    }
    if (m.removal) {
        m.removal->examples = rebase_path(m.removal->examples, b.base_dir, out);
        m.removal->pairs = rebase_path(m.removal->pairs, b.base_dir, out);
    }
    return m;
}

std::vector<fs::path> input_files(const fs::path& manifest_path, const DatasetBundle& b) {
    std::vector<fs::path> in{manifest_path};
    auto add = [&](const std::string& p) {
        if (!p.empty()) in.push_back(b.base_dir / p);
    };
    add(b.manifest.class_embeddings);
    for (const auto& [_, s] : b.manifest.splits) {
        add(s.embeddings);
        add(s.labels);
        add(s.clean_labels);
        add(s.noise_mask);
    }
    if (b.manifest.removal) {
        add(b.manifest.removal->examples);
        add(b.manifest.removal->pairs);
    }
    return in;
}

// Refuses to write over any input file.
void guard_outputs(const fs::path& out_dir, const std::vector<std::string>& names, const std::vector<fs::path>& inputs) {
    // run_config.json and summaries would land next to the inputs otherwise
    for (const auto& in : inputs) {
        std::error_code ec;
        if (fs::exists(in) && fs::equivalent(out_dir, fs::absolute(in).parent_path(), ec)) {
            throw InvalidInput("--out " + out_dir.string() + " holds input " + in.string() +
                               "; choose another directory");
        }
    }
    for (const auto& name : names) {
        const auto target = out_dir / name;
        if (!fs::exists(target)) continue;
        for (const auto& in : inputs) {
            std::error_code ec;
            if (fs::exists(in) && fs::equivalent(target, in, ec)) {
                throw InvalidInput("output " + target.string() + " would overwrite input " + in.string() +
                                   "; choose another --out");
            }
        }
    }
}

const SplitData& need_split(const DatasetBundle& b, const std::string& name) {
    if (!b.has_split(name)) {
        std::string have;
        for (const auto& [k, _] : b.splits) have += (have.empty() ? "" : ", ") + k;
        throw InvalidInput("manifest has no split '" + name + "' (available: " + have + ")");
    }
    return b.split(name);
}

void need_task(const DatasetBundle& b, TaskKind kind, const std::string& what) {
    if (b.manifest.task != kind) {
        throw InvalidInput(what + " needs a " + to_string(kind) + " manifest, got " + to_string(b.manifest.task));
    }
}

LabelSet clean_of(const SplitData& s) { return s.clean_labels ? *s.clean_labels : s.labels; }
MultiLabelSet clean_multi_of(const SplitData& s) {
    return s.clean_multi_labels ? *s.clean_multi_labels : s.multi_labels;
}

std::string pick_eval_split(const DatasetBundle& b, const std::string& requested) {
    if (!requested.empty()) {
        need_split(b, requested);
        return requested;
    }
    if (b.has_split("test")) return "test";
    if (b.has_split("val")) return "val";
    throw InvalidInput("no evaluation split: the manifest needs a 'test' or 'val' split");
}

RemovalPlan plan_from_bundle(const DatasetBundle& b, std::size_t n, std::size_t C) {
    auto plan = RemovalPlan::empty(n, C);
    for (auto i : b.removed_examples) plan.drop_example(i);
    for (auto [i, c] : b.removed_pairs) plan.remove_pair(i, c);
    return plan;
}

std::vector<bool> flatten_flags(const std::vector<MislabelReport>& per_class, std::size_t n) {
    const std::size_t C = per_class.size();
    std::vector<bool> flags(n * C, false);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < n && i < per_class[c].size(); ++i) flags[i * C + c] = per_class[c].flags[i];
    }
    return flags;
}

json score_json(const DetectionScore& s) {
    return {{"f1", s.f1}, {"precision", s.precision}, {"recall", s.recall},
            {"tp", s.tp}, {"fp", s.fp},               {"fn", s.fn}, {"tn", s.tn}};
}

std::vector<RemovalStrategy> parse_strategies(const std::vector<std::string>& names) {
    std::vector<RemovalStrategy> out;
    for (const auto& s : names) out.push_back(removal_strategy_from_string(s));
    return out;
}

// ---------------------------------------------------------------------------
// Options shared by several subcommands

struct Shared {
    std::string out_dir;
    std::string manifest;
    std::size_t jobs = default_jobs();
    std::uint64_t seed = 0;
    TrainConfig train;
    KnnConfig knn;
    SgdConfig sgd;
    std::string method = "cl";
    bool tta = false;
    std::string prune = "noise-rate";
    std::string split = "train";
};

void add_out(CLI::App* app, Shared& s, bool required = true) {
    auto* o = app->add_option("--out,-o", s.out_dir, "Output directory");
    if (required) o->required();
    app->add_option("--jobs,-j", s.jobs, "Worker threads (0 = all cores)")->capture_default_str();
}

void add_manifest(CLI::App* app, Shared& s) {
    app->add_option("--manifest,-m", s.manifest, "Dataset manifest (JSON)")->required()->check(CLI::ExistingFile);
}

void add_train(CLI::App* app, Shared& s) {
    app->add_option("--seed", s.seed, "Seed for folds, noise and SGD")->capture_default_str();
    app->add_option("--l2", s.train.l2_lambda, "L2 penalty on probe weights")->capture_default_str();
    app->add_option("--folds", s.train.cv_folds, "Cross-validation folds")->capture_default_str();
    app->add_option("--max-iter", s.train.max_iterations, "LBFGS iteration cap")->capture_default_str();
    app->add_option("--tol", s.train.gradient_tolerance, "LBFGS gradient tolerance")->capture_default_str();
    app->add_option("--lbfgs-memory", s.train.lbfgs_memory, "LBFGS history size")->capture_default_str();
}

void add_detector(CLI::App* app, Shared& s) {
    app->add_option("--method", s.method, "cl|knn|tracin|zeroshot")
        ->check(CLI::IsMember({"cl", "knn", "tracin", "zeroshot"}))
        ->capture_default_str();
    app->add_flag("--tta", s.tta, "Average probe predictions over every view");
    app->add_option("--prune", s.prune, "noise-rate|class")
        ->check(CLI::IsMember({"noise-rate", "class"}))
        ->capture_default_str();
    app->add_option("--k", s.knn.k, "kNN neighbours")->capture_default_str();
    app->add_option("--rounds", s.knn.rounds, "kNN voting rounds (odd)")->capture_default_str();
    app->add_option("--knn-weighting", s.knn.weighting, "similarity|uniform")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, KnnWeighting>{{"similarity", KnnWeighting::similarity},
                                                {"uniform", KnnWeighting::uniform}}));
    app->add_option("--epochs", s.sgd.epochs, "TracIn SGD epochs")->capture_default_str();
    app->add_option("--lr", s.sgd.learning_rate, "TracIn SGD learning rate")->capture_default_str();
    app->add_option("--batch", s.sgd.batch_size, "TracIn SGD batch size")->capture_default_str();
    app->add_option("--checkpoints", s.sgd.num_checkpoints, "TracIn checkpoints")->capture_default_str();
}

void finalize(Shared& s) {
    s.train.seed = s.seed;
    s.train.jobs = s.jobs == 0 ? default_jobs() : s.jobs;
    s.knn.jobs = s.train.jobs;
    s.sgd.l2_lambda = s.train.l2_lambda;
    s.train.validate();
    s.knn.validate();
}

PruneMode prune_mode(const Shared& s) {
    return s.prune == "class" ? PruneMode::by_class : PruneMode::by_noise_rate;
}

MislabelReport run_detector(const Shared& s, const DatasetBundle& b, const SplitData& d) {
    const auto method = method_from_string(s.method);
    switch (method) {
        case Method::cl: return detect_confident_learning(d.x, d.labels, s.train, s.tta, prune_mode(s));
        case Method::knn: return detect_knn(d.x, d.labels, s.knn);
        case Method::tracin: {
            const auto cutoff = detect_confident_learning(d.x, d.labels, s.train, s.tta, prune_mode(s)).num_flagged();
            RngStream rng = RngStream(s.seed).split(0x747261636eULL);
            const auto trail = train_sgd_with_checkpoints(d.x.canonical(), d.labels, s.sgd, rng);
            return detect_tracin_linear(trail, d.x.canonical(), d.labels, cutoff);
        }
        case Method::zeroshot: return detect_zero_shot(d.x, *b.class_embeddings, d.labels, s.tta);
    }
    throw InvalidInput("unknown method");
}

void check_detector_inputs(const Shared& s, const DatasetBundle& b) {
    const auto method = method_from_string(s.method);
    if (b.manifest.task == TaskKind::multi_label && method != Method::cl) {
        throw InvalidInput("multi-label detection supports --method cl only");
    }
    if (method == Method::zeroshot && !b.class_embeddings) {
        throw InvalidInput("--method zeroshot needs 'class_embeddings' in the manifest");
    }
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns the summary object echoed on stdout.

struct GenArgs {
    SyntheticSpec spec;
    std::size_t val_n = 0;
    std::size_t test_n = 0;
    bool class_embeddings = false;
};

json cmd_gen(const Shared& s, const GenArgs& g, Phase& phase) {
    SyntheticSpec spec = g.spec;
    spec.seed = s.seed;
    spec.validate();
    const fs::path out = s.out_dir;
    phase.computing = true;
    fs::create_directories(out);

    SyntheticGenerator gen(spec);
    DatasetManifest m;
    m.task = spec.multi_label ? TaskKind::multi_label : TaskKind::single_label;
    m.num_classes = spec.num_classes;
    m.dim = spec.dim;
    for (std::size_t c = 0; c < spec.num_classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
    const std::vector<std::pair<std::string, std::size_t>> splits = {{"train", spec.n}, {"val", g.val_n}, {"test", g.test_n}};
    for (std::size_t k = 0; k < splits.size(); ++k) {
        const auto& [name, count] = splits[k];
        if (count == 0) continue;
        const auto sample = gen.sample(count, k);
        SplitEntry e;
        e.n = count;
        e.views = spec.views;
        e.embeddings = name + ".emb";
        e.labels = name + (spec.multi_label ? ".mlabels" : ".labels");
        e.clean_labels = e.labels;
        write_embeddings(sample.x, out / e.embeddings);
        if (spec.multi_label) {
            write_multilabels(sample.multi_labels, out / e.labels);
        } else {
            write_labels(sample.labels, out / e.labels);
        }
        m.splits[name] = e;
    }
    if (g.class_embeddings) {
        m.class_embeddings = "classes.emb";
        write_embeddings(EmbeddingTensor{{gen.centers()}}, out / m.class_embeddings);
    }
    m.provenance = {{"generator", "synthetic-clusters"},
                    {"num_classes", spec.num_classes},
                    {"dim", spec.dim},
                    {"separation", spec.separation},
                    {"noise_std", spec.noise_std},
                    {"views", spec.views},
                    {"view_jitter", spec.view_jitter},
                    {"multi_label", spec.multi_label},
                    {"positive_rate", spec.positive_rate},
                    {"seed", spec.seed}};
    write_manifest(m, out / "manifest.json");
    json sizes = json::object();
    for (const auto& [name, e] : m.splits) sizes[name] = e.n;
    return {{"manifest", (out / "manifest.json").string()}, {"splits", sizes}};
}

struct NoiseArgs {
    std::string kind = "symmetric";
    double rate = 0.0;
    bool exact = false;
    std::string labels_file;
    std::vector<std::size_t> classes;  // multi-label columns to corrupt
};

json cmd_inject(const Shared& s, const NoiseArgs& a, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    const auto& split = need_split(bundle, s.split);
    const std::size_t C = bundle.num_classes();
    const auto kind = a.kind == "confidence" ? NoiseKind::confidence_based : noise_kind_from_string(a.kind);
    if (!(a.rate >= 0.0 && a.rate <= 1.0)) throw InvalidInput("--rate must lie in [0, 1]");
    if (kind == NoiseKind::external_file && a.labels_file.empty()) throw InvalidInput("--kind external needs --labels-file");
    const bool multi = bundle.manifest.task == TaskKind::multi_label;
    if (multi && kind != NoiseKind::symmetric) throw InvalidInput("multi-label noise supports --kind symmetric only");
    const std::string ext = multi ? ".mlabels" : ".labels";
    const std::vector<std::string> outputs = {"manifest.json", s.split + ".noisy" + ext, s.split + ".clean" + ext,
                                              s.split + ".noise_mask"};
    fs::create_directories(out);
    guard_outputs(out, outputs, input_files(s.manifest, bundle));

    phase.computing = true;
    auto m = rebase(bundle, out);
    auto& entry = m.splits[s.split];
    json summary;
    if (multi) {
        std::vector<std::size_t> classes = a.classes;
        if (classes.empty()) {
            for (std::size_t c = 0; c < C; ++c) classes.push_back(c);
        }
        const auto clean = clean_multi_of(split);
        const auto r = inject_multilabel_flips(clean, a.rate, classes, s.seed);
        write_multilabels(r.noisy_labels, out / outputs[1]);
        write_multilabels(r.clean_labels, out / outputs[2]);
        MultiLabelSet mask(clean.size(), C);
        for (std::size_t k = 0; k < r.noise_mask.size(); ++k) mask.set(k / C, k % C, r.noise_mask[k]);
        write_multilabels(mask, out / outputs[3]);
        const auto flipped = std::count(r.noise_mask.begin(), r.noise_mask.end(), true);
        m.provenance["noise"] = {{"kind", "symmetric"}, {"rate", a.rate}, {"seed", s.seed},
                                 {"classes", classes}, {"split", s.split}};
        summary = {{"noised_pairs", flipped}};
    } else {
        const auto clean = clean_of(split);
        NoiseResult r;
        switch (kind) {
            case NoiseKind::symmetric: r = inject_symmetric(clean, a.rate, s.seed, a.exact); break;
            case NoiseKind::asymmetric: r = inject_asymmetric(clean, a.rate, s.seed, a.exact); break;
            case NoiseKind::confidence_based:
                r = inject_confidence_based(split.x.canonical(), clean, a.rate, s.train, s.seed, a.exact);
                break;
            case NoiseKind::external_file: r = load_external_labels(a.labels_file, clean); break;
        }
        write_labels(r.noisy_labels, out / outputs[1]);
        write_labels(r.clean_labels, out / outputs[2]);
        write_mask(r.noise_mask, out / outputs[3]);
        auto spec = r.spec.to_json();
        spec["split"] = s.split;
        m.provenance["noise"] = spec;
        summary = {{"noised", std::count(r.noise_mask.begin(), r.noise_mask.end(), true)},
                   {"observed_rate", r.observed_rate()}};
    }
    entry.labels = outputs[1];
    entry.clean_labels = outputs[2];
    entry.noise_mask = outputs[3];
    m.removal.reset();
    write_manifest(m, out / "manifest.json");
    summary["manifest"] = (out / "manifest.json").string();
    summary["noise_mask"] = (out / outputs[3]).string();
    return summary;
}

json cmd_detect(const Shared& s, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    const auto& d = need_split(bundle, s.split);
    check_detector_inputs(s, bundle);
    fs::create_directories(out);
    guard_outputs(out, {"report.tsv"}, input_files(s.manifest, bundle));

    phase.computing = true;
    json summary{{"method", s.method}, {"split", s.split}, {"report", (out / "report.tsv").string()}};
    if (bundle.manifest.task == TaskKind::multi_label) {
        const auto analysis = analyze_multilabel(d.x.canonical(), d.multi_labels, s.train);
        std::vector<MislabelReport> per_class;
        for (const auto& c : analysis.classes) {
            per_class.push_back(c.skipped ? make_report(std::vector<bool>(d.size(), false),
                                                        std::vector<double>(d.size(), 0.0), "cl")
                                          : c.report);
        }
        write_multilabel_report(per_class, out / "report.tsv");
        summary["flagged_pairs"] = analysis.total_flags();
        if (d.noise_mask) summary["detection"] = score_json(detection_f1(flatten_flags(per_class, d.size()), *d.noise_mask));
        return summary;
    }
    const auto report = run_detector(s, bundle, d);
    write_report(report, out / "report.tsv");
    summary["flagged"] = report.num_flagged();
    if (d.noise_mask) summary["detection"] = score_json(detection_f1(report, *d.noise_mask));
    return summary;
}

struct CleanArgs {
    std::string report;
    std::string strategy = "optimal";
    double alpha = 1.0;
    std::optional<std::size_t> budget;
    double tau = 0.1;
    std::vector<double> alphas = {0.5, 1.0, 1.5, 2.0};
    std::vector<std::string> strategies = {"per-image", "per-label"};
};

void write_grid_outputs(const GridSearchResult& g, const fs::path& out) {
    write_grid_table(g, out / "grid.csv");
    write_json(g.to_json(), out / "gridsearch.json");
}

json write_multilabel_removal(const DatasetBundle& bundle, const RemovalPlan& plan, const fs::path& out) {
    // Earlier removals in the input manifest are kept.
    auto merged = plan;
    for (auto i : bundle.removed_examples) merged.drop_example(i);
    for (auto [i, c] : bundle.removed_pairs) merged.remove_pair(i, c);
    write_index_list(merged.dropped_list(), out / "removed_examples.txt");
    write_pair_list(merged.pair_list(), out / "removed_pairs.txt");
    write_removal_plan(merged, out / "removal_plan.json");
    auto m = rebase(bundle, out);
    m.removal = RemovalEntry{"removed_examples.txt", "removed_pairs.txt"};
    write_manifest(m, out / "manifest.json");
    std::size_t pairs = 0;
    for (std::size_t c = 0; c < merged.num_classes(); ++c) pairs += merged.removals_for_class(c);
    return {{"removed_examples", merged.dropped_list().size()},
            {"removed_pairs", pairs},
            {"manifest", (out / "manifest.json").string()}};
}

json cmd_clean(const Shared& s, const CleanArgs& a, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    const auto& d = need_split(bundle, "train");
    const bool multi = bundle.manifest.task == TaskKind::multi_label;
    if (!multi && !a.report.empty() && !fs::exists(a.report)) throw InvalidInput("report " + a.report + " not found");
    if (multi && a.strategy == "optimal") need_split(bundle, "val");
    if (!multi && a.report.empty()) check_detector_inputs(s, bundle);
    if (multi && a.strategy != "optimal") removal_strategy_from_string(a.strategy);
    fs::create_directories(out);
    auto inputs = input_files(s.manifest, bundle);
    if (!a.report.empty()) inputs.push_back(a.report);
    guard_outputs(out, {"manifest.json", "removed_examples.txt", "removed_pairs.txt", "removal_plan.json", "report.tsv",
                        "grid.csv", "gridsearch.json"},
                  inputs);

    if (!multi) {
        MislabelReport report;
        if (!a.report.empty()) {
            report = read_report(a.report);
            if (report.size() != d.size()) {
                throw InvalidInput("report has " + std::to_string(report.size()) + " rows but the train split has n=" +
                                   std::to_string(d.size()));
            }
        }
        phase.computing = true;
        if (a.report.empty()) {
            report = run_detector(s, bundle, d);
            write_report(report, out / "report.tsv");
        }
        std::set<std::size_t> removed(bundle.removed_examples.begin(), bundle.removed_examples.end());
        for (auto i : report.flagged_indices()) removed.insert(i);
        const std::vector<std::size_t> list(removed.begin(), removed.end());
        write_index_list(list, out / "removed_examples.txt");
        auto m = rebase(bundle, out);
        m.removal = RemovalEntry{"removed_examples.txt", ""};
        write_manifest(m, out / "manifest.json");
        return {{"removed_examples", list.size()}, {"manifest", (out / "manifest.json").string()}};
    }

    GridSpec grid;
    grid.alphas = a.alphas;
    grid.strategies = parse_strategies(a.strategies);
    grid.tau = a.tau;
    phase.computing = true;
    const auto analysis = analyze_multilabel(d.x.canonical(), d.multi_labels, s.train);
    RemovalPlan plan;
    if (a.strategy == "per-label") {
        plan = per_label_removal(analysis, d.size(), std::vector<double>(bundle.num_classes(), a.alpha));
    } else if (a.strategy == "per-image") {
        plan = per_image_removal(analysis, d.multi_labels, a.budget, a.tau);
    } else if (a.strategy == "none") {
        plan = RemovalPlan::empty(d.size(), bundle.num_classes());
    } else {
        const auto& v = bundle.split("val");
        const auto g = optimal_per_class_removal(analysis, d.x.canonical(), d.multi_labels, v.x.canonical(),
                                                 clean_multi_of(v), grid, s.train);
        write_grid_outputs(g, out);
        plan = g.plan;
    }
    auto summary = write_multilabel_removal(bundle, plan, out);
    summary["strategy"] = a.strategy;
    return summary;
}

json cmd_retrain(const Shared& s, const std::string& eval_split, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    const auto& d = need_split(bundle, "train");
    const auto ev = pick_eval_split(bundle, eval_split);
    const auto& e = bundle.split(ev);
    if (!bundle.manifest.removal) warn("manifest has no removal entry; the cleaned model equals the noisy one");
    fs::create_directories(out);
    guard_outputs(out, {"retrain.json"}, input_files(s.manifest, bundle));

    phase.computing = true;
    json summary{{"eval_split", ev}};
    if (bundle.manifest.task == TaskKind::multi_label) {
        const auto plan = plan_from_bundle(bundle, d.size(), bundle.num_classes());
        const auto r = retrain_after_cleaning(d.x.canonical(), d.multi_labels, plan, s.train, e.x.canonical(),
                                              clean_multi_of(e));
        auto nan_null = [](const std::vector<double>& v) {
            json a = json::array();
            for (double x : v) a.push_back(std::isnan(x) ? json(nullptr) : json(x));
            return a;
        };
        summary.update({{"metric", "macro_auc"}, {"before", r.before}, {"after", r.after}, {"gain", r.after - r.before},
                        {"per_class_before", nan_null(r.per_class_before)},
                        {"per_class_after", nan_null(r.per_class_after)}, {"removed_pairs", r.removed}});
    } else {
        const auto r = retrain_after_cleaning(d.x.canonical(), d.labels, bundle.removed_examples, s.train,
                                              e.x.canonical(), clean_of(e));
        summary.update({{"metric", "accuracy"}, {"before", r.before}, {"after", r.after}, {"gain", r.after - r.before},
                        {"removed_examples", r.removed}});
    }
    write_json(summary, out / "retrain.json");
    return summary;
}

json cmd_eval(const Shared& s, const std::string& report_path, const std::string& thresholds, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    const auto& d = need_split(bundle, s.split);
    if (!d.noise_mask) throw InvalidInput("split '" + s.split + "' has no noise_mask to evaluate against");
    if (!fs::exists(report_path)) throw InvalidInput("report " + report_path + " not found");
    const std::vector<double> ts = thresholds.empty() ? std::vector<double>{} : parse_range(thresholds);
    fs::create_directories(out);
    guard_outputs(out, {"eval.json", "threshold_sweep.csv"}, input_files(s.manifest, bundle));

    phase.computing = true;
    json summary{{"report", report_path}, {"split", s.split}};
    if (bundle.manifest.task == TaskKind::multi_label) {
        const auto per_class = read_multilabel_report(report_path);
        if (per_class.size() != bundle.num_classes()) throw InvalidInput("report class count does not match manifest");
        summary["detection"] = score_json(detection_f1(flatten_flags(per_class, d.size()), *d.noise_mask));
    } else {
        const auto report = read_report(report_path);
        if (report.size() != d.size()) throw InvalidInput("report length does not match the split");
        summary["detection"] = score_json(detection_f1(report, *d.noise_mask));
        if (!ts.empty()) {
            std::vector<std::size_t> cut;
            for (double t : ts) {
                if (t < 0 || t > static_cast<double>(d.size())) throw InvalidInput("threshold outside [0, n]");
                cut.push_back(static_cast<std::size_t>(std::llround(t)));
            }
            const auto curve = tracin_threshold_sweep(report.ranking, *d.noise_mask, cut, report.num_flagged());
            std::ofstream csv(out / "threshold_sweep.csv", std::ios::trunc);
            csv << "threshold,f1,reference\n";
            json pts = json::array();
            for (const auto& p : curve) {
                csv << p.threshold << ',' << p.f1 << ',' << (p.is_reference ? 1 : 0) << '\n';
                pts.push_back({{"threshold", p.threshold}, {"f1", p.f1}, {"reference", p.is_reference}});
            }
            summary["threshold_sweep"] = pts;
        }
    }
    json file = summary;
    file["report"] = rel_to(fs::path(report_path), out).generic_string();
    write_json(file, out / "eval.json");
    return summary;
}

struct SweepArgs {
    std::string levels = "0.1:0.6:0.1";
    std::vector<std::string> methods = {"cl"};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::string kind = "confidence";
    bool retrain = false;
    std::string eval_split;
    bool plot_data = false;
    std::string fractions = "0.05,0.1,0.25,0.5,1";
    std::vector<std::string> strategies = {"none", "per-image", "per-label", "optimal"};
    std::vector<double> alphas = {0.5, 1.0, 1.5, 2.0};
    std::vector<std::string> grid_strategies = {"per-image", "per-label"};
    double tau = 0.1;
    bool on_validation = false;
};

void write_series(const SweepResult& r, const std::vector<double>& axis, const std::vector<std::string>& methods,
                  const fs::path& path, bool retrain_columns) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << r.axis_name << ",method," << (retrain_columns ? "mean_before,mean_after,mean_gain" : "mean_f1") << '\n';
    auto cell = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
    for (double a : axis) {
        for (const auto& m : methods) {
            out << a << ',' << m << ',';
            if (retrain_columns) {
                std::optional<double> before;
                const auto after = r.mean_after(a, m), gain = r.mean_gain(a, m);
                if (after && gain) before = *after - *gain;
                out << cell(before) << ',' << cell(after) << ',' << cell(gain);
            } else {
                out << cell(r.mean_f1(a, m));
            }
            out << '\n';
        }
    }
}

json cmd_sweep_noise(const Shared& s, const SweepArgs& a, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    need_task(bundle, TaskKind::single_label, "sweep-noise");
    const auto& d = need_split(bundle, "train");
    NoiseSweepConfig cfg;
    cfg.levels = parse_range(a.levels);
    cfg.methods.clear();
    for (const auto& m : a.methods) cfg.methods.push_back(method_from_string(m));
    cfg.seeds = a.seeds;
    cfg.kind = a.kind == "confidence" ? NoiseKind::confidence_based : noise_kind_from_string(a.kind);
    cfg.train = s.train;
    cfg.knn = s.knn;
    cfg.sgd = s.sgd;
    cfg.tta = s.tta;
    cfg.retrain = a.retrain;
    cfg.jobs = s.train.jobs;
    SingleLabelData data{d.x, clean_of(d), bundle.class_embeddings, std::nullopt, std::nullopt};
    if (a.retrain) {
        const auto& e = bundle.split(pick_eval_split(bundle, a.eval_split));
        data.eval_x = e.x;
        data.eval_y = clean_of(e);
    }
    fs::create_directories(out);
    guard_outputs(out, {"sweep.csv", "summary.json"}, input_files(s.manifest, bundle));

    phase.computing = true;
    const auto r = sweep_noise_levels(data, cfg);
    r.write_csv(out / "sweep.csv");
    auto summary = r.summary();
    write_json(summary, out / "summary.json");
    if (a.plot_data) {
        write_series(r, cfg.levels, a.methods, out / "fig1_f1_vs_noise.csv", false);
        if (a.retrain) write_series(r, cfg.levels, a.methods, out / "fig2_retrain_vs_noise.csv", true);
    }
    summary["rows"] = r.records.size();
    summary["csv"] = (out / "sweep.csv").string();
    return summary;
}

MultiLabelData multilabel_data(const DatasetBundle& bundle) {
    need_task(bundle, TaskKind::multi_label, "this command");
    const auto& tr = need_split(bundle, "train");
    const auto& va = need_split(bundle, "val");
    const auto& te = need_split(bundle, "test");
    return {tr.x.canonical(), tr.multi_labels,     va.x.canonical(),
            clean_multi_of(va), te.x.canonical(), clean_multi_of(te)};
}

json cmd_sweep_fractions(const Shared& s, const SweepArgs& a, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    const auto data = multilabel_data(bundle);
    FractionSweepConfig cfg;
    cfg.fractions = parse_range(a.fractions);
    cfg.strategies = a.strategies;
    cfg.seeds = a.seeds;
    cfg.train = s.train;
    cfg.grid.alphas = a.alphas;
    cfg.grid.strategies = parse_strategies(a.grid_strategies);
    cfg.grid.tau = a.tau;
    cfg.evaluate_on_validation = a.on_validation;
    cfg.jobs = s.train.jobs;
    fs::create_directories(out);
    guard_outputs(out, {"sweep.csv", "summary.json"}, input_files(s.manifest, bundle));

    phase.computing = true;
    const auto r = sweep_data_fractions(data, cfg);
    r.write_csv(out / "sweep.csv");
    auto summary = r.summary();
    write_json(summary, out / "summary.json");
    if (a.plot_data) write_series(r, cfg.fractions, a.strategies, out / "fig3_auc_vs_fraction.csv", true);
    summary["rows"] = r.records.size();
    summary["csv"] = (out / "sweep.csv").string();
    return summary;
}

json cmd_gridsearch(const Shared& s, const SweepArgs& a, Phase& phase) {
    const fs::path out = s.out_dir;
    const auto bundle = load_manifest(s.manifest);
    need_task(bundle, TaskKind::multi_label, "gridsearch");
    const auto& tr = need_split(bundle, "train");
    const auto& va = need_split(bundle, "val");
    GridSpec grid;
    grid.alphas = a.alphas;
    grid.strategies = parse_strategies(a.grid_strategies);
    grid.tau = a.tau;
    fs::create_directories(out);
    guard_outputs(out, {"manifest.json", "grid.csv", "gridsearch.json", "removal_plan.json", "removed_pairs.txt",
                        "removed_examples.txt"},
                  input_files(s.manifest, bundle));

    phase.computing = true;
    const auto g = optimal_per_class_removal(tr.x.canonical(), tr.multi_labels, va.x.canonical(), clean_multi_of(va),
                                             grid, s.train);
    write_grid_outputs(g, out);
    auto summary = write_multilabel_removal(bundle, g.plan, out);
    json choices = json::array();
    for (const auto& c : g.choices) {
        choices.push_back({{"strategy", to_string(c.strategy)}, {"alpha", c.alpha}, {"val_auc", opt(c.val_auc)}});
    }
    summary["choices"] = choices;
    return summary;
}

// Every option of the chosen subcommand, as given or defaulted.
json run_config(const CLI::App* sub, const std::vector<std::string>& args) {
    json options = json::object();
    for (const auto* o : sub->get_options()) {
        if (o->get_lnames().empty() || o->get_lnames().front() == "help") continue;
        const auto& name = o->get_lnames().front();
        if (o->count() > 0) {
            const auto& res = o->results();
            options[name] = res.size() == 1 ? json(res.front()) : json(res);
        } else {
            options[name] = o->get_default_str();
        }
    }
    return {{"command", sub->get_name()}, {"args", args}, {"options", options}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mislabel detection on frozen embeddings"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    Shared s;
    GenArgs gen;
    NoiseArgs noise;
    CleanArgs clean;
    SweepArgs sweep;
    std::string eval_split, report_path, thresholds;
    std::size_t budget = 0;

    auto* g = app.add_subcommand("gen", "Write a synthetic Gaussian-cluster dataset");
    add_out(g, s);
    g->add_option("--seed", s.seed)->capture_default_str();
    g->add_option("--classes", gen.spec.num_classes)->capture_default_str();
    g->add_option("--n", gen.spec.n, "Training examples")->capture_default_str();
    g->add_option("--val-n", gen.val_n, "Validation examples (0 = no split)")->capture_default_str();
    g->add_option("--test-n", gen.test_n, "Test examples (0 = no split)")->capture_default_str();
    g->add_option("--dim", gen.spec.dim)->capture_default_str();
    g->add_option("--separation", gen.spec.separation)->capture_default_str();
    g->add_option("--noise-std", gen.spec.noise_std)->capture_default_str();
    g->add_option("--views", gen.spec.views)->capture_default_str();
    g->add_option("--view-jitter", gen.spec.view_jitter)->capture_default_str();
    g->add_flag("--multi-label", gen.spec.multi_label);
    g->add_option("--positive-rate", gen.spec.positive_rate)->capture_default_str();
    g->add_flag("--class-embeddings", gen.class_embeddings, "Also write the cluster centers as class embeddings");

    auto* inj = app.add_subcommand("inject-noise", "Corrupt the labels of one split");
    add_manifest(inj, s);
    add_out(inj, s);
    add_train(inj, s);
    inj->add_option("--kind", noise.kind, "symmetric|asymmetric|confidence|external")
        ->check(CLI::IsMember({"symmetric", "asymmetric", "confidence", "external"}))
        ->capture_default_str();
    inj->add_option("--rate", noise.rate)->required();
    inj->add_flag("--exact", noise.exact, "Corrupt exactly floor(rate * n) examples");
    inj->add_option("--labels-file", noise.labels_file, "Noisy labels for --kind external")->check(CLI::ExistingFile);
    inj->add_option("--noise-classes", noise.classes, "Multi-label columns to corrupt (default all)")->delimiter(',');
    inj->add_option("--split", s.split)->capture_default_str();

    auto* det = app.add_subcommand("detect", "Flag likely mislabeled examples");
    add_manifest(det, s);
    add_out(det, s);
    add_train(det, s);
    add_detector(det, s);
    det->add_option("--split", s.split)->capture_default_str();

    auto* cl = app.add_subcommand("clean", "Write a manifest with flagged data removed");
    add_manifest(cl, s);
    add_out(cl, s);
    add_train(cl, s);
    add_detector(cl, s);
    cl->add_option("--report", clean.report, "Use an existing report instead of detecting");
    cl->add_option("--strategy", clean.strategy, "Multi-label: none|per-image|per-label|optimal")
        ->check(CLI::IsMember({"none", "per-image", "per-label", "optimal"}))
        ->capture_default_str();
    cl->add_option("--alpha", clean.alpha, "Per-label removal multiplier")->capture_default_str();
    auto* budget_opt = cl->add_option("--budget", budget, "Per-image removal count (default: sum of class flags)");
    cl->add_option("--tau", clean.tau, "Softmin temperature")->capture_default_str();
    cl->add_option("--alphas", clean.alphas)->delimiter(',')->capture_default_str();
    cl->add_option("--grid-strategies", clean.strategies)->delimiter(',')->capture_default_str();

    auto* rt = app.add_subcommand("retrain", "Compare probes trained before and after removal");
    add_manifest(rt, s);
    add_out(rt, s);
    add_train(rt, s);
    rt->add_option("--eval-split", eval_split, "Default: test, else val");

    auto* ev = app.add_subcommand("eval", "Score a report against the noise mask");
    add_manifest(ev, s);
    add_out(ev, s);
    ev->add_option("--report", report_path)->required();
    ev->add_option("--split", s.split)->capture_default_str();
    ev->add_option("--thresholds", thresholds, "Top-T cutoffs, start:stop:step or a list");

    auto* sn = app.add_subcommand("sweep-noise", "Detection F1 across noise levels");
    add_manifest(sn, s);
    add_out(sn, s);
    add_train(sn, s);
    add_detector(sn, s);
    sn->add_option("--levels", sweep.levels)->capture_default_str();
    sn->add_option("--methods", sweep.methods)
        ->delimiter(',')
        ->check(CLI::IsMember({"cl", "knn", "tracin", "zeroshot"}))
        ->capture_default_str();
    sn->add_option("--seeds", sweep.seeds)->delimiter(',')->capture_default_str();
    sn->add_option("--kind", sweep.kind)
        ->check(CLI::IsMember({"symmetric", "asymmetric", "confidence"}))
        ->capture_default_str();
    sn->add_flag("--retrain", sweep.retrain, "Also retrain after removing flagged examples");
    sn->add_option("--eval-split", sweep.eval_split);
    sn->add_flag("--plot-data", sweep.plot_data, "Write per-figure series files");

    auto* sf = app.add_subcommand("sweep-fractions", "Multi-label cleaning gain across training-set fractions");
    add_manifest(sf, s);
    add_out(sf, s);
    add_train(sf, s);
    sf->add_option("--fractions", sweep.fractions)->capture_default_str();
    sf->add_option("--strategies", sweep.strategies)
        ->delimiter(',')
        ->check(CLI::IsMember({"none", "per-image", "per-label", "optimal"}))
        ->capture_default_str();
    sf->add_option("--seeds", sweep.seeds)->delimiter(',')->capture_default_str();
    sf->add_option("--alphas", sweep.alphas)->delimiter(',')->capture_default_str();
    sf->add_option("--grid-strategies", sweep.grid_strategies)->delimiter(',')->capture_default_str();
    sf->add_option("--tau", sweep.tau)->capture_default_str();
    sf->add_flag("--on-validation", sweep.on_validation, "Score on val instead of test");
    sf->add_flag("--plot-data", sweep.plot_data, "Write per-figure series files");

    auto* gs = app.add_subcommand("gridsearch", "Optimal per-class removal on the validation split");
    add_manifest(gs, s);
    add_out(gs, s);
    add_train(gs, s);
    gs->add_option("--alphas", sweep.alphas)->delimiter(',')->capture_default_str();
    gs->add_option("--grid-strategies", sweep.grid_strategies)->delimiter(',')->capture_default_str();
    gs->add_option("--tau", sweep.tau)->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    const CLI::App* sub = app.get_subcommands().front();
    auto previous = set_warning_sink([&err](std::string_view m) { err << "warning: " << m << '\n'; });
    struct Restore {
        WarningSink& prev;
        ~Restore() { set_warning_sink(prev); }
    } restore{previous};

    Phase phase;
    try {
        finalize(s);
        if (budget_opt->count() > 0) clean.budget = budget;
        json summary;
        const auto name = sub->get_name();
        if (name == "gen") summary = cmd_gen(s, gen, phase);
        else if (name == "inject-noise") summary = cmd_inject(s, noise, phase);
        else if (name == "detect") summary = cmd_detect(s, phase);
        else if (name == "clean") summary = cmd_clean(s, clean, phase);
        else if (name == "retrain") summary = cmd_retrain(s, eval_split, phase);
        else if (name == "eval") summary = cmd_eval(s, report_path, thresholds, phase);
        else if (name == "sweep-noise") summary = cmd_sweep_noise(s, sweep, phase);
        else if (name == "sweep-fractions") summary = cmd_sweep_fractions(s, sweep, phase);
        else summary = cmd_gridsearch(s, sweep, phase);

        write_json(run_config(sub, args), fs::path(s.out_dir) / "run_config.json");
        summary["command"] = name;
        summary["status"] = "ok";
        out << summary.dump() << '\n';
        return 0;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return phase.computing ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace semd
