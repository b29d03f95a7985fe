#pragma once

// Brute-force reference computations for the test suites. Each one follows
// the textbook definition directly and shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// AUC as the fraction of (positive, negative) pairs won by the positive,
// ties counting one half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

// Overlap metrics from explicit index sets.
struct SetCounts {
    std::size_t a, b, inter, uni;
};

inline SetCounts set_counts(const std::vector<double>& a, const std::vector<double>& b) {
    std::set<std::size_t> sa, sb, si, su;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 1.0) sa.insert(i);
        if (b[i] == 1.0) sb.insert(i);
    }
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(si, si.end()));
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(su, su.end()));
    return {sa.size(), sb.size(), si.size(), su.size()};
}

inline double set_dice(const std::vector<double>& a, const std::vector<double>& b) {
    const auto c = set_counts(a, b);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.a + c.b);
}

inline double set_jaccard(const std::vector<double>& a, const std::vector<double>& b) {
    const auto c = set_counts(a, b);
    if (c.uni == 0) return 1.0;
    return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

// Computational form n*Sxy - Sx*Sy over the root of the variance terms.
inline double closed_form_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        syy += static_cast<long double>(y[i]) * y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
    }
    const long double num = n * sxy - sx * sy;
    const long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    return static_cast<double>(num / den);
}

// Soft dice loss evaluated from its definition.
inline double soft_dice_value(const std::vector<double>& p, const std::vector<double>& t, double s) {
    double inter = 0, sp = 0, st = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * t[i];
        sp += p[i];
        st += t[i];
    }
    return 1.0 - (2.0 * inter + s) / (sp + st + s);
}

inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double up = f(x);
        x[i] = orig - h;
        const double down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Connected components of an explicit edge list by breadth-first search.
// Returns, for every node, the smallest node index in its component.
inline std::vector<std::size_t> bfs_components(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    std::vector<std::vector<std::size_t>> adj(n);
    for (auto [a, b] : edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<std::size_t> label(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t s = 0; s < n; ++s) {
        if (label[s] != std::numeric_limits<std::size_t>::max()) continue;
        std::queue<std::size_t> q;
        q.push(s);
        label[s] = s;
        while (!q.empty()) {
            auto u = q.front();
            q.pop();
            for (auto v : adj[u]) {
                if (label[v] == std::numeric_limits<std::size_t>::max()) {
                    label[v] = s;
                    q.push(v);
                }
            }
        }
    }
    return label;
}

inline int bit_count(std::uint64_t v) {
    int c = 0;
    for (int i = 0; i < 64; ++i) c += static_cast<int>((v >> i) & 1u);
    return c;
}

inline double hinge_objective(const std::vector<double>& w, double b, double lambda,
                              const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
    double reg = 0.0;
    for (double v : w) reg += v * v;
    double loss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double f = b;
        for (std::size_t j = 0; j < w.size(); ++j) f += w[j] * xs[i][j];
        loss += std::max(0.0, 1.0 - ys[i] * f);
    }
    return 0.5 * lambda * reg + loss / static_cast<double>(xs.size());
}

// Minimum of the 2-D hinge objective over a regular (w1, w2, b) grid.
inline double grid_search_objective(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                                    double lambda, double range, double step) {
    double best = std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(std::lround(2.0 * range / step));
    for (int i = 0; i <= n; ++i) {
        const double w1 = -range + i * step;
        for (int j = 0; j <= n; ++j) {
            const double w2 = -range + j * step;
            for (int k = 0; k <= n; ++k) {
                const double b = -range + k * step;
                best = std::min(best, hinge_objective({w1, w2}, b, lambda, xs, ys));
            }
        }
    }
    return best;
}

// Best training accuracy any linear rule sign(w.x + b) reaches on a tiny
// 2-D point set, by trying every separating direction on a fine angle
// sweep and every threshold between projected points.
inline double best_linear_accuracy(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
    double best = 0.0;
    const int kAngles = 3600;
    for (int a = 0; a < kAngles; ++a) {
        const double th = 2.0 * 3.14159265358979323846 * a / kAngles;
        const double w1 = std::cos(th), w2 = std::sin(th);
        std::vector<double> proj;
        for (const auto& x : xs) proj.push_back(w1 * x[0] + w2 * x[1]);
        std::vector<double> cuts = proj;
        std::sort(cuts.begin(), cuts.end());
        std::vector<double> thresholds{cuts.front() - 1.0, cuts.back() + 1.0};
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) thresholds.push_back(0.5 * (cuts[i] + cuts[i + 1]));
        for (double c : thresholds) {
            int correct = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) correct += ((proj[i] > c ? 1 : -1) == ys[i]);
            best = std::max(best, static_cast<double>(correct) / static_cast<double>(xs.size()));
        }
    }
    return best;
}

}  // namespace oracle
