#pragma once

#include "lesionkit/imageops.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace lesionkit::ensemble {

using imageops::FloatPlane;

// Fixed class order for every probability triple.
enum ClassIndex : std::size_t { kMelanoma = 0, kKeratosis = 1, kNevus = 2 };
inline constexpr std::size_t kNumClasses = 3;
using ClassProbs = std::array<double, kNumClasses>;

struct PredictionRow {
    std::string image_id;
    std::string model_id;
    int replica_idx = 0;
    ClassProbs probs{};
};

// Rows keyed by (image_id, model_id, replica_idx), kept sorted by that key.
class PredictionTable {
public:
    PredictionTable() = default;
    // Throws ValidationError on a repeated key, a negative replica index or a
    // probability outside [0, 1].
    explicit PredictionTable(std::vector<PredictionRow> rows);

    const std::vector<PredictionRow>& rows() const { return rows_; }
    std::vector<std::string> image_ids() const;
    std::vector<std::string> model_ids() const;

    static PredictionTable read_csv(std::string_view text);
    std::string write_csv() const;

private:
    std::vector<PredictionRow> rows_;
};

struct PooledRow {
    std::string image_id;
    std::string model_id;
    ClassProbs probs{};
};

struct AveragedRow {
    std::string image_id;
    ClassProbs probs{};
};

enum class PoolMode { mean, max };

// Collapses replicas per (image, model); output sorted by that key.
std::vector<PooledRow> pool_replicas(const PredictionTable& table, PoolMode mode = PoolMode::mean);

// Per-class mean over models. Every image must carry the same model set;
// otherwise throws ValidationError listing the missing (image, model) pairs.
std::vector<AveragedRow> average_models(const std::vector<PooledRow>& pooled);

std::string write_pooled_csv(const std::vector<PooledRow>& rows);
std::string write_averaged_csv(const std::vector<AveragedRow>& rows);

// Per-pixel mean of a non-empty stack of equally shaped planes.
FloatPlane average_masks(const std::vector<FloatPlane>& stack);

inline constexpr double kDefaultBinarizeThreshold = 0.5;

// 1 where value >= threshold, else 0.
FloatPlane binarize(const FloatPlane& mask, double threshold = kDefaultBinarizeThreshold);

}  // namespace lesionkit::ensemble
