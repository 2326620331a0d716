#pragma once

// Straightforward re-derivations used to cross-check the library. They share
// no code with src/.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

struct CL {
    std::vector<double> t;
    std::vector<int> t_ok;
    std::vector<std::vector<long>> joint;
    Rows q;
    std::vector<int> flags;
};

// by_class = false: prune by noise rate.
inline CL confident_learning(const Rows& p, const std::vector<int>& y, int C, bool by_class) {
    const int n = static_cast<int>(y.size());
    CL r;
    r.t.assign(C, 0.0);
    r.t_ok.assign(C, 0);
    for (int j = 0; j < C; ++j) {
        double s = 0;
        int k = 0;
        for (int i = 0; i < n; ++i) {
            if (y[i] == j) {
                s += p[i][j];
                k++;
            }
        }
        if (k) {
            r.t[j] = s / k;
            r.t_ok[j] = 1;
        }
    }
    r.joint.assign(C, std::vector<long>(C, 0));
    std::vector<int> col(n, -1);
    for (int i = 0; i < n; ++i) {
        int best = -1;
        for (int j = C - 1; j >= 0; --j) {  // scan backwards, keep >= so the lowest index wins ties
            if (!r.t_ok[j] || !(p[i][j] >= r.t[j])) continue;
            if (best == -1 || p[i][j] >= p[i][best]) best = j;
        }
        col[i] = best;
        if (best >= 0) r.joint[y[i]][best]++;
    }
    std::vector<long> cnt(C, 0);
    for (int v : y) cnt[v]++;
    r.q.assign(C, std::vector<double>(C, 0.0));
    double total = 0;
    for (int i = 0; i < C; ++i) {
        long rs = 0;
        for (int j = 0; j < C; ++j) rs += r.joint[i][j];
        for (int j = 0; j < C; ++j) {
            if (rs == 0) r.q[i][j] = (i == j) ? double(cnt[i]) / n : 0.0;
            else r.q[i][j] = double(r.joint[i][j]) / rs * (double(cnt[i]) / n);
            total += r.q[i][j];
        }
    }
    for (auto& row : r.q) {
        for (auto& v : row) v /= total;
    }
    r.flags.assign(n, 0);
    for (int i = 0; i < C; ++i) {
        std::vector<int> pool;
        for (int e = 0; e < n; ++e) {
            if (y[e] == i && col[e] != i) pool.push_back(e);
        }
        auto take = [&](int k, auto key) {
            std::vector<int> v = pool;
            std::stable_sort(v.begin(), v.end(), [&](int a, int b) { return key(a) > key(b); });
            for (int m = 0; m < k && m < static_cast<int>(v.size()); ++m) r.flags[v[m]] = 1;
        };
        if (by_class) {
            int k = 0;
            for (int j = 0; j < C; ++j) {
                if (j != i) k += static_cast<int>(std::floor(n * r.q[i][j] + 1e-9));
            }
            take(k, [&](int e) { return -p[e][i]; });
        } else {
            for (int j = 0; j < C; ++j) {
                if (j == i || !r.t_ok[j]) continue;
                const int k = static_cast<int>(std::floor(n * r.q[i][j] + 1e-9));
                take(k, [&](int e) { return p[e][j] - r.t[j]; });
            }
        }
    }
    return r;
}

// Fraction of (positive, negative) pairs ordered correctly, ties counted 1/2.
inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0;
    long pairs = 0;
    for (std::size_t a = 0; a < s.size(); ++a) {
        if (y[a] != 1) continue;
        for (std::size_t b = 0; b < s.size(); ++b) {
            if (y[b] != 0) continue;
            ++pairs;
            num += s[a] > s[b] ? 1.0 : (s[a] == s[b] ? 0.5 : 0.0);
        }
    }
    return num / pairs;
}

struct Counts {
    long tp = 0, fp = 0, fn = 0;
    double f1() const { return tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn); }
};

inline Counts count(const std::vector<bool>& flags, const std::vector<bool>& mask) {
    Counts c;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        c.tp += flags[i] && mask[i];
        c.fp += flags[i] && !mask[i];
        c.fn += !flags[i] && mask[i];
    }
    return c;
}

// Mean softmax cross-entropy + lambda/2 |W|^2 over logits z = W x + b,
// evaluated directly from the definition.
inline double probe_loss(const std::vector<double>& params, const Rows& x, const std::vector<int>& y, int C,
                         double lambda) {
    const int d = static_cast<int>(x[0].size());
    double loss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<double> z(C);
        for (int c = 0; c < C; ++c) {
            z[c] = params[C * d + c];
            for (int k = 0; k < d; ++k) z[c] += params[c * d + k] * x[i][k];
        }
        const double m = *std::max_element(z.begin(), z.end());
        double s = 0;
        for (double v : z) s += std::exp(v - m);
        loss += m + std::log(s) - z[y[i]];
    }
    loss /= static_cast<double>(x.size());
    double w2 = 0;
    for (int k = 0; k < C * d; ++k) w2 += params[k] * params[k];
    return loss + 0.5 * lambda * w2;
}

}  // namespace oracle
