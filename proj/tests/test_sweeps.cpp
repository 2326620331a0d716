#include "semd/eval.hpp"
#include "semd/noise.hpp"
#include "semd/synthetic.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace semd;

namespace {

SingleLabelData single_label(std::size_t n, std::uint64_t seed, bool with_eval = false) {
    SyntheticSpec spec;
    spec.n = n;
    spec.num_classes = 4;
    spec.dim = 8;
    spec.separation = 4.0;
    spec.views = 2;
    spec.seed = seed;
    const SyntheticGenerator gen(spec);
    auto s = gen.sample(n, 0);
    SingleLabelData d;
    d.x = s.x;
    d.clean = s.labels;
    d.class_embeddings = gen.centers();
    if (with_eval) {
        auto t = gen.sample(n / 2, 2);
        d.eval_x = t.x;
        d.eval_y = t.labels;
    }
    return d;
}

MultiLabelData multi_label(std::size_t n, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.multi_label = true;
    spec.num_classes = 3;
    spec.dim = 12;
    spec.separation = 3.0;
    spec.seed = seed;
    const SyntheticGenerator gen(spec);
    const auto tr = gen.sample(n, 0);
    const auto va = gen.sample(n / 2, 1);
    const auto te = gen.sample(n / 2, 2);
    const auto noise = inject_multilabel_flips(tr.multi_labels, 0.15, {0, 1}, seed);
    return {tr.x.canonical(), noise.noisy_labels, va.x.canonical(), va.multi_labels, te.x.canonical(),
            te.multi_labels};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("parse_range") {
    CHECK(parse_range("0.1:0.6:0.1") == std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK(parse_range("0.05,0.1,1") == std::vector<double>{0.05, 0.1, 1.0});
    CHECK(parse_range("0.5") == std::vector<double>{0.5});
    CHECK(parse_range("0:1:0.5") == std::vector<double>{0.0, 0.5, 1.0});
    CHECK_THROWS_AS(parse_range(""), InvalidInput);
    CHECK_THROWS_AS(parse_range("0:1:0"), InvalidInput);
    CHECK_THROWS_AS(parse_range("1:0:0.1"), InvalidInput);
    CHECK_THROWS_AS(parse_range("a,b"), InvalidInput);
}

TEST_CASE("method names") {
    for (auto m : {Method::cl, Method::knn, Method::tracin, Method::zeroshot}) {
        CHECK(method_from_string(to_string(m)) == m);
    }
    CHECK(method_from_string("semd") == Method::cl);
    CHECK_THROWS_AS(method_from_string("magic"), InvalidInput);
}

TEST_CASE("stratified subsample") {
    std::vector<int> strata;
    for (int i = 0; i < 200; ++i) strata.push_back(i % 7 == 0 ? 1 : 0);
    const auto full = stratified_subsample(strata, 1.0, 3);
    CHECK(full.size() == 200);
    for (std::size_t i = 0; i < 200; ++i) CHECK(full[i] == i);

    const auto a = stratified_subsample(strata, 0.5, 3);
    CHECK(a == stratified_subsample(strata, 0.5, 3));
    CHECK(a != stratified_subsample(strata, 0.5, 4));
    CHECK(std::is_sorted(a.begin(), a.end()));
    std::size_t ones = 0;
    for (auto i : a) ones += strata[i];
    CHECK(ones == 15);  // round(0.5 * 29)
    CHECK(a.size() == 15 + 86);

    // every stratum keeps at least one row
    const auto tiny = stratified_subsample(strata, 0.01, 3);
    std::set<int> seen;
    for (auto i : tiny) seen.insert(strata[i]);
    CHECK(seen.size() == 2);
    CHECK_THROWS_AS(stratified_subsample(strata, 0.0, 1), InvalidInput);
    CHECK_THROWS_AS(stratified_subsample(strata, 1.5, 1), InvalidInput);
}

TEST_CASE("noise sweep with no noise records a null cell") {
    const auto d = single_label(200, 1);
    NoiseSweepConfig cfg;
    cfg.levels = {0.0};
    cfg.seeds = {0};
    cfg.kind = NoiseKind::symmetric;
    const auto r = sweep_noise_levels(d, cfg);
    REQUIRE(r.records.size() == 1);
    CHECK_FALSE(r.records[0].f1);
    CHECK(r.records[0].noised == 0);
    CHECK_FALSE(r.records[0].note.empty());
    CHECK_FALSE(r.mean_f1(0.0, "cl"));
}

TEST_CASE("noise sweep bookkeeping") {
    const auto d = single_label(300, 2, true);
    NoiseSweepConfig cfg;
    cfg.levels = {0.2, 0.4};
    cfg.methods = {Method::cl, Method::knn, Method::tracin, Method::zeroshot};
    cfg.seeds = {5, 6};
    cfg.train.cv_folds = 4;
    cfg.knn.rounds = 3;
    cfg.sgd.epochs = 10;
    cfg.retrain = true;
    const auto r = sweep_noise_levels(d, cfg);
    CHECK(r.axis_name == "noise_level");
    REQUIRE(r.records.size() == 2 * 4 * 2);
    // order: level, method, seed
    CHECK(r.records[0].axis == 0.2);
    CHECK(r.records[0].method == "cl");
    CHECK(r.records[0].seed == 5);
    CHECK(r.records[1].seed == 6);
    CHECK(r.records[2].method == "knn");
    CHECK(r.records[8].axis == 0.4);
    // two seeds give two distinct records with their own noise
    CHECK(r.records[0].noised != r.records[1].noised);
    for (const auto& rec : r.records) {
        CHECK(rec.f1);
        CHECK(rec.before);
        CHECK(rec.after);
        CHECK(rec.note.empty());
    }
    // TracIn uses the CL cutoff of its cell
    CHECK(r.records[4].method == "tracin");
    CHECK(r.records[4].flagged == r.records[0].flagged);
    // every method sees the same noise in a cell
    CHECK(r.records[2].noised == r.records[0].noised);
    CHECK(r.mean_f1(0.2, "cl"));

    testutil::TempDir dir("sweep");
    r.write_csv(dir / "sweep.csv");
    const auto text = slurp(dir / "sweep.csv");
    CHECK(text.rfind("noise_level,method,seed,f1,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 17);
    const auto j = r.summary();
    CHECK(j["axis"] == "noise_level");
    CHECK(j["cells"].size() == 8);
}

TEST_CASE("noise sweeps reproduce exactly and do not depend on parallelism") {
    const auto d = single_label(300, 3, true);
    NoiseSweepConfig cfg;
    cfg.levels = {0.1, 0.3};
    cfg.methods = {Method::cl, Method::knn};
    cfg.seeds = {0, 1};
    cfg.train.cv_folds = 4;
    cfg.knn.rounds = 3;
    cfg.retrain = true;
    cfg.jobs = 1;
    const auto a = sweep_noise_levels(d, cfg);
    const auto b = sweep_noise_levels(d, cfg);
    cfg.jobs = 4;
    const auto c = sweep_noise_levels(d, cfg);
    testutil::TempDir dir("repro");
    a.write_csv(dir / "a.csv");
    b.write_csv(dir / "b.csv");
    c.write_csv(dir / "c.csv");
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    CHECK(slurp(dir / "a.csv") == slurp(dir / "c.csv"));
}

TEST_CASE("missing inputs are rejected before any cell runs") {
    auto d = single_label(200, 4);
    d.class_embeddings.reset();
    NoiseSweepConfig cfg;
    cfg.levels = {0.3};
    cfg.seeds = {0};
    cfg.methods = {Method::zeroshot};
    cfg.kind = NoiseKind::symmetric;
    CHECK_THROWS_AS(sweep_noise_levels(d, cfg), InvalidInput);
    cfg.methods = {Method::cl};
    cfg.retrain = true;
    CHECK_THROWS_AS(sweep_noise_levels(d, cfg), InvalidInput);
}

TEST_CASE("fraction sweep") {
    testutil::WarningCapture warn;
    const auto d = multi_label(600, 7);
    FractionSweepConfig cfg;
    cfg.fractions = {0.5, 1.0};
    cfg.seeds = {0};
    cfg.train.cv_folds = 4;
    cfg.grid.alphas = {0.5, 1.0};
    const auto r = sweep_data_fractions(d, cfg);
    CHECK(r.axis_name == "fraction");
    REQUIRE(r.records.size() == 2 * 4);
    for (const auto& rec : r.records) {
        REQUIRE(rec.before);
        REQUIRE(rec.after);
        CHECK(rec.per_class.size() == 3);
        if (rec.method == "none") {
            CHECK(*rec.after == *rec.before);
            CHECK(rec.flagged == 0);
        }
    }
    CHECK(r.records[4].noised == 600);
    CHECK(r.records[0].noised < 600);

    cfg.jobs = 3;
    const auto again = sweep_data_fractions(d, cfg);
    testutil::TempDir dir("frac");
    r.write_csv(dir / "a.csv");
    again.write_csv(dir / "b.csv");
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

    cfg.strategies = {"sideways"};
    CHECK_THROWS_AS(sweep_data_fractions(d, cfg), InvalidInput);
}
