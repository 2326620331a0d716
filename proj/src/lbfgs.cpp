#include "semd/lbfgs.hpp"

#include "semd/common.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>

namespace semd {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double inf_norm(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

struct Probe {
    double step = 0.0;
    double value = 0.0;
    double slope = 0.0;  // directional derivative along the search direction
    std::vector<double> x;
    std::vector<double> grad;
};

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), or the
// midpoint when the interpolant is unusable. Kept inside the middle 80% of
// the interval.
double interpolate(const Probe& a, const Probe& b) {
    const double lo = std::min(a.step, b.step);
    const double hi = std::max(a.step, b.step);
    const double width = hi - lo;
    const double mid = 0.5 * (lo + hi);
    const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
    const double disc = d1 * d1 - a.slope * b.slope;
    if (!(disc >= 0.0) || !std::isfinite(d1)) return mid;
    const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
    const double denom = b.slope - a.slope + 2.0 * d2;
    if (denom == 0.0) return mid;
    const double t = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
    if (!std::isfinite(t) || t < lo + 0.1 * width || t > hi - 0.1 * width) return mid;
    return t;
}

class LineSearch {
public:
    LineSearch(const ObjectiveFn& f, const LbfgsOptions& opt, std::span<const double> x0,
               std::span<const double> dir, double f0, double slope0)
        : f_(f), opt_(opt), x0_(x0), dir_(dir), f0_(f0), slope0_(slope0) {}

    // Returns the accepted probe, or nothing if no strong-Wolfe point was found.
    std::optional<Probe> run(double initial_step) {
        Probe prev{0.0, f0_, slope0_, {}, {}};
        double step = initial_step;
        for (std::size_t i = 0; evals_ < opt_.max_line_search_evals; ++i) {
            Probe cur = evaluate(step);
            if (!std::isfinite(cur.value)) {
                // Overshot into overflow; shrink toward the last good point.
                step = 0.5 * (prev.step + step);
                continue;
            }
            if (cur.value > f0_ + opt_.armijo_c1 * cur.step * slope0_ ||
                (i > 0 && cur.value >= prev.value)) {
                return zoom(std::move(prev), std::move(cur));
            }
            if (std::abs(cur.slope) <= -opt_.curvature_c2 * slope0_) return cur;
            if (cur.slope >= 0.0) return zoom(std::move(cur), std::move(prev));
            prev = std::move(cur);
            step *= 2.0;
        }
        return std::nullopt;
    }

    std::size_t evaluations() const noexcept { return evals_; }

private:
    Probe evaluate(double step) {
        Probe p;
        p.step = step;
        p.x.resize(x0_.size());
        p.grad.resize(x0_.size());
        for (std::size_t i = 0; i < x0_.size(); ++i) p.x[i] = x0_[i] + step * dir_[i];
        p.value = f_(p.x, p.grad);
        p.slope = dot(p.grad, dir_);
        ++evals_;
        return p;
    }

    std::optional<Probe> zoom(Probe lo, Probe hi) {
        while (evals_ < opt_.max_line_search_evals) {
            if (std::abs(hi.step - lo.step) <= 1e-16 * std::max(1.0, lo.step)) break;
            Probe cur = evaluate(interpolate(lo, hi));
            if (!std::isfinite(cur.value) || cur.value > f0_ + opt_.armijo_c1 * cur.step * slope0_ ||
                cur.value >= lo.value) {
                hi = std::move(cur);
                continue;
            }
            if (std::abs(cur.slope) <= -opt_.curvature_c2 * slope0_) return cur;
            if (cur.slope * (hi.step - lo.step) >= 0.0) hi = std::move(lo);
            lo = std::move(cur);
        }
        // Out of budget: lo still satisfies sufficient decrease, so accept it
        // if it actually moved.
        if (lo.step > 0.0 && lo.value < f0_) return lo;
        return std::nullopt;
    }

    const ObjectiveFn& f_;
    const LbfgsOptions& opt_;
    std::span<const double> x0_;
    std::span<const double> dir_;
    double f0_;
    double slope0_;
    std::size_t evals_ = 0;
};

struct CurvaturePair {
    std::vector<double> s;
    std::vector<double> y;
    double rho;
};

// Two-loop recursion: returns -H * grad.
std::vector<double> search_direction(const std::deque<CurvaturePair>& memory,
                                     std::span<const double> grad) {
    std::vector<double> q(grad.begin(), grad.end());
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
        alpha[k] = memory[k].rho * dot(memory[k].s, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * memory[k].y[i];
    }
    if (!memory.empty()) {
        const auto& last = memory.back();
        const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
        for (auto& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
        const double beta = memory[k].rho * dot(memory[k].y, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * memory[k].s[i];
    }
    for (auto& v : q) v = -v;
    return q;
}

}  // namespace

LbfgsResult minimize_lbfgs(const ObjectiveFn& objective, std::vector<double> x0,
                           const LbfgsOptions& options) {
    if (options.memory == 0) throw InvalidInput("lbfgs: memory must be positive");
    if (!(options.gradient_tolerance > 0.0)) throw InvalidInput("lbfgs: tolerance must be positive");

    LbfgsResult result;
    result.x = std::move(x0);
    std::vector<double> grad(result.x.size());
    result.value = objective(result.x, grad);
    result.evaluations = 1;
    result.value_history.push_back(result.value);
    if (!std::isfinite(result.value)) throw InvalidInput("lbfgs: objective not finite at start");

    std::deque<CurvaturePair> memory;
    while (true) {
        result.gradient_inf_norm = inf_norm(grad);
        if (result.gradient_inf_norm < options.gradient_tolerance) {
            result.status = LbfgsStatus::converged;
            break;
        }
        if (result.iterations >= options.max_iterations) {
            result.status = LbfgsStatus::max_iterations;
            break;
        }

        auto dir = search_direction(memory, grad);
        double slope = dot(grad, dir);
        if (!(slope < 0.0)) {
            memory.clear();
            dir.assign(grad.begin(), grad.end());
            for (auto& v : dir) v = -v;
            slope = dot(grad, dir);
        }
        const double initial_step =
            memory.empty() ? std::min(1.0, 1.0 / std::sqrt(dot(grad, grad))) : 1.0;

        LineSearch search(objective, options, result.x, dir, result.value, slope);
        auto accepted = search.run(initial_step);
        result.evaluations += search.evaluations();
        if (!accepted) {
            if (!memory.empty()) {
                // Stale curvature can produce a poor direction; retry once
                // from steepest descent before giving up.
                memory.clear();
                continue;
            }
            result.status = LbfgsStatus::line_search_failed;
            break;
        }

        CurvaturePair pair;
        pair.s.resize(grad.size());
        pair.y.resize(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            pair.s[i] = accepted->x[i] - result.x[i];
            pair.y[i] = accepted->grad[i] - grad[i];
        }
        const double sy = dot(pair.s, pair.y);
        if (sy > 1e-12 * std::sqrt(dot(pair.y, pair.y) * dot(pair.s, pair.s))) {
            pair.rho = 1.0 / sy;
            memory.push_back(std::move(pair));
            if (memory.size() > options.memory) memory.pop_front();
        }

        result.x = std::move(accepted->x);
        grad = std::move(accepted->grad);
        result.value = accepted->value;
        result.value_history.push_back(result.value);
        ++result.iterations;
    }
    return result;
}

}  // namespace semd
