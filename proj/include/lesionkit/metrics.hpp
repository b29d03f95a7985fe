#pragma once

#include "lesionkit/imageops.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace lesionkit::metrics {

using imageops::FloatPlane;

// Overlap metrics over binary masks (every value 0 or 1). Both return 1.0
// when both masks are empty (and smooth == 0 for dice).
double dice(const FloatPlane& a, const FloatPlane& b, double smooth = 0.0);
double jaccard(const FloatPlane& a, const FloatPlane& b);

struct LossWithGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // d loss / d pred, same layout as pred
};

inline constexpr double kDefaultDiceSmooth = 1.0;

// 1 - (2 sum(p t) + s) / (sum(p) + sum(t) + s), with its analytic gradient.
// pred must lie in [0, 1]; truth must be binary.
LossWithGradient soft_dice_loss(const FloatPlane& pred, const FloatPlane& truth,
                                double smooth = kDefaultDiceSmooth);

inline constexpr double kBceEpsilon = 1e-7;

double bce_loss(const FloatPlane& pred, const FloatPlane& truth);
double mse_loss(const FloatPlane& pred, const FloatPlane& truth);

struct ScoredLabel {
    double score = 0.0;
    bool positive = false;
};

// Mann-Whitney estimate of ROC AUC: the fraction of (positive, negative)
// pairs in which the positive scores higher, ties counting one half.
// Computed from mid-ranks in O(n log n). Throws when either class is empty.
double auc(std::span<const ScoredLabel> items);

double pearson_r(std::span<const double> xs, std::span<const double> ys);

// ---------------------------------------------------------------------------
// Early stopping

class MetricHistory {
public:
    MetricHistory() = default;
    // Epochs numbered 1..values.size().
    static MetricHistory from_values(std::span<const double> values);

    // Throws ValidationError unless epoch exceeds the last one.
    void add(int epoch, double value);

    const std::vector<std::pair<int, double>>& entries() const { return entries_; }

private:
    std::vector<std::pair<int, double>> entries_;
};

enum class StopKind { on_decrease, on_no_increase };

struct StopPolicy {
    StopKind kind = StopKind::on_decrease;
    int patience = 1;
};

// Stops at the epoch completing `patience` consecutive epochs whose value is
// below (on_decrease) or not above (on_no_increase) the best earlier value.
std::optional<int> early_stop(const MetricHistory& history, const StopPolicy& policy);

}  // namespace lesionkit::metrics
