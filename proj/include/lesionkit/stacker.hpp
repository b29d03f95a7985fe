#pragma once

#include "lesionkit/ensemble.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lesionkit::stacker {

// Feature vectors concatenate one (mel, sk, nevus) block per model, models
// in ascending id order. A layout without a roster describes plain
// `raw_dimension`-long vectors (used when training on arbitrary data).
struct FeatureLayout {
    std::vector<std::string> roster;
    std::size_t raw_dimension = 0;

    static FeatureLayout for_roster(std::vector<std::string> models);
    std::size_t dimension() const { return roster.empty() ? raw_dimension : roster.size() * ensemble::kNumClasses; }

    friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

enum class Combination {
    // One replica per model, drawn from the Cartesian product.
    cartesian,
    // The i-th combined replica takes the i-th replica of every model.
    aligned,
};

struct StackConfig {
    // Only the first replicas_per_model replica indices (ascending) of each
    // model are used; 0 uses all of them.
    int replicas_per_model = 3;
    std::size_t combination_cap = 50;
    Combination combination = Combination::cartesian;
    std::uint64_t seed = 0;

    void validate() const;
};

struct StackedSample {
    std::string image_id;
    std::vector<int> replicas;  // replica index chosen for each roster model
    std::vector<double> features;
};

// Builds combined-replica feature vectors for every image in the table.
// When the number of combinations exceeds combination_cap, that many
// distinct ones are drawn with a generator keyed on (seed, image_id).
// Output is sorted by image_id, then by replica tuple. Throws when an image
// lacks rows for a roster model.
std::vector<StackedSample> build_features(const ensemble::PredictionTable& table, const FeatureLayout& layout,
                                          const StackConfig& config);

struct SvmOptions {
    double lambda = 1e-3;
    int epochs = 200;
    std::uint64_t seed = 0;
};

struct SvmModel {
    std::vector<double> weights;
    double bias = 0.0;
    double lambda = 1e-3;
    int epochs = 0;
    std::uint64_t seed = 0;
    FeatureLayout layout;

    friend bool operator==(const SvmModel&, const SvmModel&) = default;
};

// Linear SVM by projected stochastic subgradient descent on
//   lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))
// with step 1/(lambda t), an unregularized bias, and a seeded reshuffle
// every epoch. Returns the average of the iterates visited in the final
// epoch. When epoch_objectives is given it receives, per epoch, the
// objective of that epoch's averaged iterate.
SvmModel svm_train(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmOptions& options, FeatureLayout layout = {},
                   std::vector<double>* epoch_objectives = nullptr);

double svm_decision(const SvmModel& model, std::span<const double> x);

double svm_objective(std::span<const double> weights, double bias, double lambda,
                     std::span<const std::vector<double>> features, std::span<const int> labels);

std::string encode_model(const SvmModel& model);
SvmModel decode_model(std::string_view bytes);

// ---------------------------------------------------------------------------

struct TaskLabels {
    bool melanoma = false;
    bool keratosis = false;
};

// Ground-truth CSV: image_id,melanoma,seborrheic_keratosis (0/1 values).
std::map<std::string, TaskLabels> read_labels(std::string_view csv_text);

struct StackModels {
    SvmModel melanoma;
    SvmModel keratosis;
};

// Trains both one-vs-all SVMs on the combined replicas of every labelled
// image in the table.
StackModels train_stack(const ensemble::PredictionTable& table, const FeatureLayout& layout,
                        const std::map<std::string, TaskLabels>& labels, const StackConfig& config,
                        const SvmOptions& options);

struct StackScore {
    std::string image_id;
    double score_mel = 0.0;
    double score_sk = 0.0;
};

// Scores every combined replica with both SVMs and averages the decision
// values per image.
std::vector<StackScore> stack_predict(const SvmModel& mel_model, const SvmModel& sk_model,
                                      const ensemble::PredictionTable& table, const StackConfig& config);

std::string write_scores_csv(const std::vector<StackScore>& scores);

}  // namespace lesionkit::stacker
