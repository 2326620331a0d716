#include "semd/lbfgs.hpp"
#include "semd/probe.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace semd;

TEST_CASE("lbfgs minimizes a convex quadratic") {
    // f = sum_i a_i (x_i - c_i)^2
    const std::vector<double> a{1, 10, 100, 0.5}, c{1, -2, 3, 0.25};
    auto f = [&](std::span<const double> x, std::span<double> g) {
        double v = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            v += a[i] * (x[i] - c[i]) * (x[i] - c[i]);
            g[i] = 2 * a[i] * (x[i] - c[i]);
        }
        return v;
    };
    const auto r = minimize_lbfgs(f, std::vector<double>(4, 0.0));
    CHECK(r.status == LbfgsStatus::converged);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r.x[i] == doctest::Approx(c[i]).epsilon(1e-6));
}

TEST_CASE("lbfgs solves Rosenbrock") {
    auto f = [](std::span<const double> x, std::span<double> g) {
        const double a = 1 - x[0], b = x[1] - x[0] * x[0];
        g[0] = -2 * a - 400 * x[0] * b;
        g[1] = 200 * b;
        return a * a + 100 * b * b;
    };
    LbfgsOptions opt;
    opt.gradient_tolerance = 1e-8;
    const auto r = minimize_lbfgs(f, {-1.2, 1.0}, opt);
    CHECK(r.status == LbfgsStatus::converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("accepted steps decrease the objective monotonically") {
    std::mt19937_64 rng(5);
    const auto s = testutil::clusters(200, 4, 6, 3.0, 1);
    const auto& x = s.x.canonical();
    ProbeObjective obj(x, s.labels, 1e-3);
    auto f = [&](std::span<const double> p, std::span<double> g) { return obj(p, g); };
    const auto r = minimize_lbfgs(f, std::vector<double>(obj.num_params(), 0.0));
    REQUIRE(r.value_history.size() >= 2);
    for (std::size_t k = 1; k < r.value_history.size(); ++k) {
        CHECK(r.value_history[k] <= r.value_history[k - 1]);
    }
}

TEST_CASE("zero-gradient start returns immediately") {
    auto f = [](std::span<const double> x, std::span<double> g) {
        g[0] = 2 * x[0];
        return x[0] * x[0];
    };
    const auto r = minimize_lbfgs(f, {0.0});
    CHECK(r.status == LbfgsStatus::converged);
    CHECK(r.iterations == 0);
}

TEST_CASE("probe gradient matches central finite differences") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t n = 5 + rng() % 46, d = 1 + rng() % 8, C = 2 + rng() % 3;
        Matrix x(n, d);
        for (double& v : x.data()) v = g(rng);
        LabelSet y = testutil::random_labels(n, C, rng);
        const double lambda = 1e-3 * (1 + rng() % 100);
        ProbeObjective obj(x, y, lambda);
        std::vector<double> p(obj.num_params());
        for (double& v : p) v = 0.5 * g(rng);
        std::vector<double> grad(p.size());
        const double value = obj(p, grad);

        oracle::Rows rows(n, std::vector<double>(d));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) rows[i][k] = x(i, k);
        }
        CHECK(value == doctest::Approx(oracle::probe_loss(p, rows, y.labels, static_cast<int>(C), lambda)).epsilon(1e-12));

        double diff2 = 0, norm2 = 0;
        const double h = 1e-6;
        for (std::size_t k = 0; k < p.size(); ++k) {
            auto up = p, dn = p;
            up[k] += h;
            dn[k] -= h;
            const double fd = (obj.value(up) - obj.value(dn)) / (2 * h);
            diff2 += (fd - grad[k]) * (fd - grad[k]);
            norm2 += grad[k] * grad[k];
        }
        CHECK(std::sqrt(diff2 / norm2) < 1e-5);
    }
}
