#include "semd/eval.hpp"
#include "semd/multilabel.hpp"
#include "semd/noise.hpp"
#include "semd/synthetic.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace semd;

namespace {

struct MlSplits {
    Matrix x_train, x_val;
    MultiLabelSet clean, noisy, y_val;
    std::vector<bool> mask;
};

MlSplits make_ml(std::size_t C, std::size_t n, const std::vector<std::size_t>& noisy_classes, double rate,
                 std::uint64_t seed, std::size_t dim = 16, double separation = 3.0) {
    SyntheticSpec spec;
    spec.multi_label = true;
    spec.num_classes = C;
    spec.dim = dim;
    spec.separation = separation;
    spec.seed = seed;
    const SyntheticGenerator gen(spec);
    auto train = gen.sample(n, 0);
    auto val = gen.sample(n / 2, 1);
    auto noise = inject_multilabel_flips(train.multi_labels, rate, noisy_classes, seed + 1000);
    return {train.x.canonical(), val.x.canonical(), train.multi_labels, noise.noisy_labels, val.multi_labels,
            noise.noise_mask};
}

// Analysis with hand-set binary probabilities P(label = 1).
MultiLabelAnalysis fixed_analysis(const std::vector<std::vector<double>>& p1) {
    MultiLabelAnalysis a;
    for (const auto& col : p1) {
        ClassAnalysis c;
        c.proba = Matrix(col.size(), 2);
        for (std::size_t i = 0; i < col.size(); ++i) {
            c.proba(i, 0) = 1 - col[i];
            c.proba(i, 1) = col[i];
        }
        c.report = make_report(std::vector<bool>(col.size(), false), std::vector<double>(col.size(), 0.0), "cl");
        a.classes.push_back(std::move(c));
    }
    return a;
}

}  // namespace

TEST_CASE("strategy names") {
    for (auto s : {RemovalStrategy::none, RemovalStrategy::per_image, RemovalStrategy::per_label}) {
        CHECK(removal_strategy_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(removal_strategy_from_string("some"), InvalidInput);
}

TEST_CASE("apply_plan") {
    MultiLabelSet y(4, 2);
    y.set(0, 0, true);
    y.set(1, 1, true);
    y.set(2, 0, true);
    const auto y_copy = y;

    const auto id = apply_plan(y, RemovalPlan::empty(4, 2));
    CHECK(id.kept_examples == std::vector<std::size_t>{0, 1, 2, 3});
    for (const auto& rows : id.class_rows) CHECK(rows == std::vector<std::size_t>{0, 1, 2, 3});

    auto drop = RemovalPlan::empty(4, 2);
    drop.drop_example(0);
    CHECK(drop.removed_pairs(0, 0) == 1);
    CHECK(drop.removed_pairs(0, 1) == 1);
    const auto d = apply_plan(y, drop);
    CHECK(d.kept_examples == std::vector<std::size_t>{1, 2, 3});
    for (const auto& rows : d.class_rows) CHECK(rows == std::vector<std::size_t>{1, 2, 3});

    auto pair = RemovalPlan::empty(4, 2);
    pair.remove_pair(0, 1);
    const auto p = apply_plan(y, pair);
    CHECK(p.class_rows[0] == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(p.class_rows[1] == std::vector<std::size_t>{1, 2, 3});
    CHECK(p.kept_examples.size() == 4);
    CHECK(pair.pair_list() == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}});
    CHECK(pair.removals_for_class(1) == 1);
    CHECK(pair.removals_for_class(0) == 0);
    CHECK(y == y_copy);
}

TEST_CASE("planted flips in one class are found and the other class is left alone") {
    testutil::WarningCapture warn;
    const auto d = make_ml(2, 2000, {0}, 0.1, 3, 16, 6.0);
    TrainConfig cfg;
    cfg.jobs = 0;
    const auto analysis = analyze_multilabel(d.x_train, d.noisy, cfg);
    std::vector<bool> planted(2000), flagged0(2000);
    for (std::size_t i = 0; i < 2000; ++i) {
        planted[i] = d.mask[i * 2 + 0];
        flagged0[i] = analysis.classes[0].report.flags[i];
    }
    CHECK(detection_f1(flagged0, planted).f1 >= 0.8);
    CHECK(static_cast<double>(analysis.classes[1].flag_count) < 0.02 * 2000);

    const auto none = per_label_removal(analysis, 2000, {0.0, 0.0});
    CHECK(none.is_empty());

    const auto one = per_label_removal(analysis, 2000, {1.0, 1.0});
    for (std::size_t c = 0; c < 2; ++c) CHECK(one.removals_for_class(c) == analysis.classes[c].flag_count);
    CHECK(one.dropped_list().empty());

    // monotone in alpha
    std::size_t last = 0;
    for (double a : {0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0}) {
        const auto plan = per_label_removal(analysis, 2000, {a, a});
        CHECK(plan.removals_for_class(0) >= last);
        last = plan.removals_for_class(0);
    }

    const auto img = per_image_removal(analysis, d.noisy);
    CHECK(img.dropped_list().size() == std::min<std::size_t>(analysis.total_flags(), 2000));
    CHECK(per_image_removal(analysis, d.noisy, 0).is_empty());
}

TEST_CASE("single-valued columns are skipped") {
    testutil::WarningCapture warn;
    auto d = make_ml(3, 300, {}, 0.0, 4);
    for (std::size_t i = 0; i < 300; ++i) d.noisy.set(i, 2, false);
    const auto a = analyze_multilabel(d.x_train, d.noisy, TrainConfig{});
    CHECK(a.classes[2].skipped);
    CHECK_FALSE(a.classes[0].skipped);
    CHECK(warn.contains("class 2"));
    CHECK(per_label_removal(a, 300, {1.0, 1.0, 1.0}).removals_for_class(2) == 0);
}

TEST_CASE("label quality aggregation") {
    MultiLabelSet y(3, 3);
    for (std::size_t i = 0; i < 3; ++i) y.set(i, 0, true);
    // q[i, c] = P(given label); example 1 has q = 0 in class 2
    const auto a = fixed_analysis({{1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}});
    const auto q = aggregate_label_quality(a, y, 0.1);
    CHECK(q[0] == doctest::Approx(1.0));
    CHECK(q[2] == doctest::Approx(1.0));
    CHECK(q[1] < 1e-3);
    auto plan = per_image_removal(a, y, 1);
    CHECK(plan.dropped_list() == std::vector<std::size_t>{1});
    CHECK(per_image_removal(a, y, 0).is_empty());

    const auto b = fixed_analysis({{0.9, 0.2, 0.6}, {0.3, 0.7, 0.5}, {0.55, 0.1, 0.95}});
    const auto mean = aggregate_label_quality(b, y, 1.0, QualityAggregate::mean);
    const auto hot = aggregate_label_quality(b, y, 1e6);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(hot[i] - mean[i]) < 1e-3);
    CHECK(mean[0] == doctest::Approx((0.9 + 0.7 + 0.45) / 3));
    CHECK_THROWS_AS(aggregate_label_quality(b, y, 0.0), InvalidInput);
}

TEST_CASE("grid search with only the none cell keeps everything") {
    testutil::WarningCapture warn;
    const auto d = make_ml(3, 600, {0}, 0.15, 5);
    GridSpec grid;
    grid.strategies.clear();
    const auto r = optimal_per_class_removal(d.x_train, d.noisy, d.x_val, d.y_val, grid, TrainConfig{});
    CHECK(r.plan.is_empty());
    for (const auto& c : r.choices) {
        CHECK(c.strategy == RemovalStrategy::none);
        CHECK(c.val_auc == c.baseline_auc);
    }
    CHECK(r.table.size() == 3);
}

TEST_CASE("grid search picks the best validation cell") {
    testutil::WarningCapture warn;
    const auto d = make_ml(3, 800, {0, 1}, 0.2, 6);
    TrainConfig cfg;
    cfg.jobs = 0;
    const auto r = optimal_per_class_removal(d.x_train, d.noisy, d.x_val, d.y_val, GridSpec{}, cfg);
    REQUIRE(r.choices.size() == 3);
    CHECK(r.table.size() == 3 * 9);
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& ch = r.choices[c];
        REQUIRE(ch.val_auc);
        REQUIRE(ch.baseline_auc);
        CHECK(*ch.val_auc >= *ch.baseline_auc);
        for (const auto& cell : r.table) {
            if (cell.cls == c && cell.val_auc) CHECK(*ch.val_auc >= *cell.val_auc);
        }
        CHECK(r.plan.removals_for_class(c) >= ch.removed);
    }

    testutil::TempDir dir("grid");
    write_grid_table(r, dir / "grid.csv");
    write_removal_plan(r.plan, dir / "plan.json");
    std::ifstream in(dir / "grid.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "class,strategy,alpha,removed,val_auc,chosen");
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == r.table.size());
    const auto j = nlohmann::json::parse(std::ifstream(dir / "plan.json"));
    CHECK(j["classes"].size() == 3);
    CHECK(j["removed_pairs"].size() == r.plan.pair_list().size());
}

TEST_CASE("noise in one class leaves the clean class mostly untouched") {
    testutil::WarningCapture warn;
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto d = make_ml(2, 1000, {0}, 0.2, 100 + seed);
        TrainConfig cfg;
        cfg.jobs = 0;
        cfg.seed = seed;
        const auto r = optimal_per_class_removal(d.x_train, d.noisy, d.x_val, d.y_val, GridSpec{}, cfg);
        const auto& c1 = r.choices[1];
        // minimal: at most 5% of the rows, a quarter of the planted rate
        const bool minimal = c1.strategy == RemovalStrategy::none || c1.removed * 20 <= 1000;
        good += r.choices[0].alpha > 0 && minimal;
    }
    CHECK(good >= 8);
}
