#include "semd/detectors.hpp"
#include "semd/eval.hpp"
#include "semd/noise.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace semd;

TEST_CASE("detection f1") {
    const std::vector<bool> mask{true, false, true, false};
    CHECK(detection_f1(mask, mask).f1 == 1.0);
    CHECK(detection_f1(std::vector<bool>(4, false), mask).f1 == 0.0);
    const auto inv = detection_f1({false, true, false, true}, mask);
    CHECK(inv.f1 == 0.0);
    CHECK(inv.tp == 0);
    CHECK(inv.fp == 2);
    CHECK(inv.fn == 2);

    const auto half = detection_f1({true, true, false, false}, mask);
    CHECK(half.precision == 0.5);
    CHECK(half.recall == 0.5);
    CHECK(half.f1 == 0.5);
    CHECK(half.tn == 1);

    CHECK(detection_f1(std::vector<bool>(3, false), std::vector<bool>(3, false)).f1 == 0.0);
    CHECK_THROWS_AS(detection_f1({true}, mask), InvalidInput);

    const auto report = make_report({true, true, false, false}, {0.4, 0.3, 0.2, 0.1}, "x");
    CHECK(detection_f1(report, mask).f1 == 0.5);
}

TEST_CASE("detection f1 agrees with counting and ignores example order") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 60;
        std::vector<bool> f(n), m(n);
        for (std::size_t i = 0; i < n; ++i) {
            f[i] = rng() % 2;
            m[i] = rng() % 3 == 0;
        }
        const auto s = detection_f1(f, m);
        const auto o = oracle::count(f, m);
        CHECK(s.f1 == doctest::Approx(o.f1()));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<bool> pf(n), pm(n);
        for (std::size_t i = 0; i < n; ++i) {
            pf[i] = f[perm[i]];
            pm[i] = m[perm[i]];
        }
        CHECK(detection_f1(pf, pm).f1 == s.f1);
    }
}

TEST_CASE("roc auc examples") {
    const std::vector<double> s{0.9, 0.8, 0.8, 0.1};
    const std::vector<int> y{1, 1, 0, 0};
    CHECK(roc_auc(s, y) == doctest::Approx(0.875));
    CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.9}, std::vector<int>{0, 0, 1}) == 1.0);
    CHECK(roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, y) == 0.5);
    CHECK_THROWS_AS(roc_auc(s, std::vector<int>{1, 1, 1, 1}), UndefinedMetric);
    CHECK_THROWS_AS(roc_auc(s, std::vector<int>{1, 2, 0, 0}), InvalidInput);
    CHECK_THROWS_AS(roc_auc(s, std::vector<int>{1, 0}), InvalidInput);
}

TEST_CASE("roc auc matches pairwise counting and monotone transforms") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 199;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % 25) / 5.0;  // plenty of ties
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        const double a = roc_auc(s, y);
        CHECK(a == doctest::Approx(oracle::auc(s, y)).epsilon(1e-12));
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
        CHECK(roc_auc(t, y) == doctest::Approx(a).epsilon(1e-12));
    }
}

TEST_CASE("threshold sweep") {
    // perfect ranking: the 30 noised examples first
    const std::size_t n = 100;
    std::vector<bool> mask(n, false);
    std::vector<std::size_t> ranking(n);
    std::iota(ranking.begin(), ranking.end(), 0);
    for (std::size_t i = 0; i < 30; ++i) mask[i] = true;
    const auto pts = tracin_threshold_sweep(ranking, mask, {0, 20, 30, 40, 100}, 30);
    REQUIRE(pts.size() == 5);
    CHECK(pts[0].f1 == 0.0);
    CHECK(pts[2].threshold == 30);
    CHECK(pts[2].f1 == 1.0);
    CHECK(pts[2].is_reference);
    CHECK(pts[1].f1 < 1.0);
    CHECK(pts[3].f1 < 1.0);
    CHECK_FALSE(pts[1].is_reference);

    // the reference threshold is added when missing
    const auto with_ref = tracin_threshold_sweep(ranking, mask, {10, 50}, 30);
    CHECK(with_ref.size() == 3);
    CHECK(with_ref[1].threshold == 30);
    CHECK(with_ref[1].is_reference);

    const std::vector<bool> all(n, true);
    CHECK(tracin_threshold_sweep(ranking, all, {n})[0].f1 == 1.0);
    CHECK_THROWS_AS(tracin_threshold_sweep(ranking, mask, {n + 1}), InvalidInput);
}

TEST_CASE("macro average skips undefined classes") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK(macro_average({0.5, nan, 1.0}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(macro_average({nan, nan}), UndefinedMetric);
}

TEST_CASE("accuracy") {
    const Matrix p{{0.9, 0.1}, {0.4, 0.6}, {0.7, 0.3}};
    CHECK(accuracy(p, LabelSet{{0, 1, 1}, 2}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("retraining with nothing removed changes nothing") {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.dim = 6;
    spec.separation = 3.0;
    const SyntheticGenerator gen(spec);
    const auto s = gen.sample(400, 0);
    const auto t = gen.sample(200, 1);
    const auto noise = inject_symmetric(s.labels, 0.2, 4);
    TrainConfig cfg;
    const auto r = retrain_after_cleaning(s.x.canonical(), noise.noisy_labels, {}, cfg, t.x.canonical(), t.labels);
    CHECK(r.after == r.before);
    CHECK(r.removed == 0);

    // removing every example of a class is an error
    std::vector<std::size_t> zeros;
    for (std::size_t i = 0; i < 400; ++i) {
        if (noise.noisy_labels[i] == 0) zeros.push_back(i);
    }
    CHECK_THROWS_AS(
        retrain_after_cleaning(s.x.canonical(), noise.noisy_labels, zeros, cfg, t.x.canonical(), t.labels),
        MissingClass);
}

TEST_CASE("cleaning helps and the oracle mask is an upper bound") {
    double oracle_after = 0, cl_after = 0, before = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SyntheticSpec spec;
        spec.n = 1000;
        spec.num_classes = 5;
        spec.dim = 32;
        spec.separation = 4.0;
        spec.seed = seed;
        const SyntheticGenerator gen(spec);
        const auto s = gen.sample(1000, 0);
        const auto t = gen.sample(1000, 1);
        TrainConfig cfg;
        cfg.jobs = 0;
        const auto noise = inject_confidence_based(s.x.canonical(), s.labels, 0.4, cfg, seed);
        const auto cl = detect_confident_learning(s.x, noise.noisy_labels, cfg, false);
        std::vector<std::size_t> truth;
        for (std::size_t i = 0; i < spec.n; ++i) {
            if (noise.noise_mask[i]) truth.push_back(i);
        }
        const auto a = retrain_after_cleaning(s.x.canonical(), noise.noisy_labels, cl.flagged_indices(), cfg,
                                              t.x.canonical(), t.labels);
        const auto b = retrain_after_cleaning(s.x.canonical(), noise.noisy_labels, truth, cfg, t.x.canonical(),
                                              t.labels);
        before += a.before / 5;
        cl_after += a.after / 5;
        oracle_after += b.after / 5;
    }
    CHECK(cl_after > before);
    CHECK(oracle_after >= cl_after - 0.005);
}
