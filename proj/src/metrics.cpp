#include "lesionkit/metrics.hpp"

#include "lesionkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lesionkit::metrics {

namespace {

void require_same_shape(const FloatPlane& a, const FloatPlane& b, const char* op) {
    if (!a.same_shape(b)) throw ValidationError(std::string(op) + ": shape mismatch");
}

void require_binary(const FloatPlane& m, const char* op) {
    for (double v : m.samples()) {
        if (v != 0.0 && v != 1.0) throw ValidationError(std::string(op) + ": mask values must be 0 or 1");
    }
}

struct OverlapCounts {
    double a = 0, b = 0, both = 0;
};

OverlapCounts count_overlap(const FloatPlane& a, const FloatPlane& b) {
    OverlapCounts c;
    const auto sa = a.samples();
    const auto sb = b.samples();
    for (std::size_t i = 0; i < sa.size(); ++i) {
        c.a += sa[i];
        c.b += sb[i];
        c.both += sa[i] * sb[i];
    }
    return c;
}

}  // namespace

double dice(const FloatPlane& a, const FloatPlane& b, double smooth) {
    require_same_shape(a, b, "dice");
    require_binary(a, "dice");
    require_binary(b, "dice");
    if (!(smooth >= 0.0)) throw ValidationError("dice: smooth must be >= 0");
    const auto c = count_overlap(a, b);
    const double denom = c.a + c.b + smooth;
    if (denom == 0.0) return 1.0;
    return (2.0 * c.both + smooth) / denom;
}

double jaccard(const FloatPlane& a, const FloatPlane& b) {
    require_same_shape(a, b, "jaccard");
    require_binary(a, "jaccard");
    require_binary(b, "jaccard");
    const auto c = count_overlap(a, b);
    const double uni = c.a + c.b - c.both;
    if (uni == 0.0) return 1.0;
    return c.both / uni;
}

LossWithGradient soft_dice_loss(const FloatPlane& pred, const FloatPlane& truth, double smooth) {
    require_same_shape(pred, truth, "soft_dice_loss");
    require_binary(truth, "soft_dice_loss");
    if (!(smooth >= 0.0)) throw ValidationError("soft_dice_loss: smooth must be >= 0");
    const auto p = pred.samples();
    const auto t = truth.samples();
    double inter = 0, sp = 0, st = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw ValidationError("soft_dice_loss: prediction outside [0, 1]");
        inter += p[i] * t[i];
        sp += p[i];
        st += t[i];
    }
    LossWithGradient out;
    out.gradient.assign(p.size(), 0.0);
    const double num = 2.0 * inter + smooth;
    const double den = sp + st + smooth;
    if (den == 0.0) return out;  // empty prediction of an empty mask
    out.loss = 1.0 - num / den;
    const double den2 = den * den;
    for (std::size_t i = 0; i < p.size(); ++i) out.gradient[i] = (num - 2.0 * t[i] * den) / den2;
    return out;
}

double bce_loss(const FloatPlane& pred, const FloatPlane& truth) {
    require_same_shape(pred, truth, "bce_loss");
    const auto p = pred.samples();
    const auto t = truth.samples();
    if (p.empty()) throw ValidationError("bce_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
        sum += -(t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q));
    }
    return sum / static_cast<double>(p.size());
}

double mse_loss(const FloatPlane& pred, const FloatPlane& truth) {
    require_same_shape(pred, truth, "mse_loss");
    const auto p = pred.samples();
    const auto t = truth.samples();
    if (p.empty()) throw ValidationError("mse_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] - t[i]) * (p[i] - t[i]);
    return sum / static_cast<double>(p.size());
}

double auc(std::span<const ScoredLabel> items) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    for (const auto& it : items) {
        if (!std::isfinite(it.score)) throw ValidationError("auc: non-finite score");
    }
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return items[a].score < items[b].score; });

    // Twice the rank sum of positives, with mid-ranks for ties, stays
    // integral: a tie block over 1-based ranks [i+1, j] has doubled
    // mid-rank i + j + 1.
    long long n_pos = 0;
    long long rank_sum_x2 = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && items[order[j]].score == items[order[i]].score) ++j;
        const long long mid_x2 = static_cast<long long>(i + j + 1);
        for (std::size_t k = i; k < j; ++k) {
            if (items[order[k]].positive) {
                ++n_pos;
                rank_sum_x2 += mid_x2;
            }
        }
        i = j;
    }
    const long long n_neg = static_cast<long long>(items.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("auc: need at least one positive and one negative");
    const long long u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
    return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ValidationError("pearson_r: length mismatch");
    if (xs.size() < 2) throw ValidationError("pearson_r: need at least two points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson_r: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

MetricHistory MetricHistory::from_values(std::span<const double> values) {
    MetricHistory h;
    for (std::size_t i = 0; i < values.size(); ++i) h.add(static_cast<int>(i + 1), values[i]);
    return h;
}

void MetricHistory::add(int epoch, double value) {
    if (!entries_.empty() && epoch <= entries_.back().first) {
        throw ValidationError("metric history epochs must be strictly increasing");
    }
    if (!std::isfinite(value)) throw ValidationError("metric history value must be finite");
    entries_.emplace_back(epoch, value);
}

std::optional<int> early_stop(const MetricHistory& history, const StopPolicy& policy) {
    if (policy.patience < 1) throw ValidationError("early stop patience must be >= 1");
    const auto& e = history.entries();
    if (e.empty()) return std::nullopt;
    double best = e.front().second;
    int streak = 0;
    for (std::size_t i = 1; i < e.size(); ++i) {
        const double v = e[i].second;
        const bool bad = policy.kind == StopKind::on_decrease ? v < best : v <= best;
        streak = bad ? streak + 1 : 0;
        if (streak >= policy.patience) return e[i].first;
        best = std::max(best, v);
    }
    return std::nullopt;
}

}  // namespace lesionkit::metrics
