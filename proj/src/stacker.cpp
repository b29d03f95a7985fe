#include "lesionkit/stacker.hpp"

#include "byte_order.hpp"
#include "lesionkit/csv.hpp"
#include "lesionkit/error.hpp"
#include "lesionkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace lesionkit::stacker {

using ensemble::kNumClasses;
using ensemble::PredictionRow;
using ensemble::PredictionTable;

FeatureLayout FeatureLayout::for_roster(std::vector<std::string> models) {
    if (models.empty()) throw ValidationError("model roster is empty");
    std::sort(models.begin(), models.end());
    if (std::adjacent_find(models.begin(), models.end()) != models.end()) {
        throw ValidationError("model roster lists a model twice");
    }
    FeatureLayout layout;
    layout.roster = std::move(models);
    return layout;
}

void StackConfig::validate() const {
    if (combination_cap < 1) throw ValidationError("combination_cap must be >= 1");
    if (replicas_per_model < 0) throw ValidationError("replicas_per_model must be >= 0");
}

namespace {

using ReplicaTuple = std::vector<int>;

// Per-model replica rows for one image, in roster order.
using ImageBlock = std::vector<std::vector<const PredictionRow*>>;

std::map<std::string, ImageBlock> group_by_image(const PredictionTable& table, const FeatureLayout& layout,
                                                 const StackConfig& config) {
    std::map<std::string, std::size_t> model_pos;
    for (std::size_t i = 0; i < layout.roster.size(); ++i) model_pos[layout.roster[i]] = i;

    std::map<std::string, ImageBlock> blocks;
    for (const auto& row : table.rows()) {
        auto& block = blocks[row.image_id];
        if (block.empty()) block.resize(layout.roster.size());
        auto it = model_pos.find(row.model_id);
        if (it == model_pos.end()) continue;
        auto& reps = block[it->second];
        // Rows arrive sorted by replica index within (image, model).
        if (config.replicas_per_model == 0 || reps.size() < static_cast<std::size_t>(config.replicas_per_model)) {
            reps.push_back(&row);
        }
    }

    std::string missing;
    for (const auto& [image, block] : blocks) {
        for (std::size_t m = 0; m < block.size(); ++m) {
            if (block[m].empty()) {
                missing += (missing.empty() ? "" : ", ") + ("(" + image + ", " + layout.roster[m] + ")");
            }
        }
    }
    if (!missing.empty()) throw ValidationError("missing model coverage for " + missing);
    return blocks;
}

std::vector<ReplicaTuple> choose_combinations(const ImageBlock& block, const std::string& image_id,
                                              const StackConfig& config) {
    const std::size_t n_models = block.size();
    std::vector<ReplicaTuple> combos;

    if (config.combination == Combination::aligned) {
        std::size_t shortest = std::numeric_limits<std::size_t>::max();
        for (const auto& reps : block) shortest = std::min(shortest, reps.size());
        const std::size_t count = std::min(shortest, config.combination_cap);
        for (std::size_t i = 0; i < count; ++i) combos.emplace_back(n_models, static_cast<int>(i));
        return combos;
    }

    // Product size, saturating once it passes the cap.
    std::size_t product = 1;
    for (const auto& reps : block) {
        product *= reps.size();
        if (product > config.combination_cap) break;
    }

    if (product <= config.combination_cap) {
        ReplicaTuple digits(n_models, 0);
        for (std::size_t k = 0; k < product; ++k) {
            combos.push_back(digits);
            for (std::size_t m = n_models; m-- > 0;) {
                if (++digits[m] < static_cast<int>(block[m].size())) break;
                digits[m] = 0;
            }
        }
        return combos;
    }

    CounterStream stream(mix_key({config.seed, fnv1a64(image_id)}));
    std::set<ReplicaTuple> drawn;
    while (drawn.size() < config.combination_cap) {
        ReplicaTuple t(n_models);
        for (std::size_t m = 0; m < n_models; ++m) t[m] = static_cast<int>(stream.next_below(block[m].size()));
        drawn.insert(std::move(t));
    }
    return {drawn.begin(), drawn.end()};
}

}  // namespace

std::vector<StackedSample> build_features(const PredictionTable& table, const FeatureLayout& layout,
                                          const StackConfig& config) {
    config.validate();
    if (layout.roster.empty()) throw ValidationError("build_features: layout has no model roster");
    const auto blocks = group_by_image(table, layout, config);

    std::vector<StackedSample> out;
    for (const auto& [image, block] : blocks) {
        for (const auto& combo : choose_combinations(block, image, config)) {
            StackedSample s;
            s.image_id = image;
            s.features.reserve(layout.dimension());
            for (std::size_t m = 0; m < block.size(); ++m) {
                const auto* row = block[m][static_cast<std::size_t>(combo[m])];
                s.replicas.push_back(row->replica_idx);
                s.features.insert(s.features.end(), row->probs.begin(), row->probs.end());
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

double svm_objective(std::span<const double> weights, double bias, double lambda,
                     std::span<const std::vector<double>> features, std::span<const int> labels) {
    double hinge = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        hinge += std::max(0.0, 1.0 - labels[i] * (dot(weights, features[i]) + bias));
    }
    return 0.5 * lambda * dot(weights, weights) + hinge / static_cast<double>(features.size());
}

SvmModel svm_train(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmOptions& options, FeatureLayout layout, std::vector<double>* epoch_objectives) {
    if (!(options.lambda > 0.0)) throw ValidationError("svm_train: lambda must be positive");
    if (options.epochs < 1) throw ValidationError("svm_train: epochs must be >= 1");
    if (features.size() != labels.size()) throw ValidationError("svm_train: feature/label count mismatch");
    if (features.empty()) throw ValidationError("svm_train: no training data");

    const std::size_t dim = features.front().size();
    for (const auto& f : features) {
        if (f.size() != dim) throw ValidationError("svm_train: feature dimension mismatch");
    }
    if (layout.roster.empty() && layout.raw_dimension == 0) layout.raw_dimension = dim;
    if (layout.dimension() != dim) throw ValidationError("svm_train: features do not match the layout");

    bool has_pos = false, has_neg = false;
    for (int y : labels) {
        if (y == 1) has_pos = true;
        else if (y == -1) has_neg = true;
        else throw ValidationError("svm_train: labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw ValidationError("svm_train: both classes must be present");

    const double lambda = options.lambda;
    const double radius = 1.0 / std::sqrt(lambda);
    std::vector<double> w(dim, 0.0);
    double b = 0.0;
    std::vector<double> avg_w(dim);
    double avg_b = 0.0;

    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.seed);
    std::uint64_t t = 0;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        std::fill(avg_w.begin(), avg_w.end(), 0.0);
        avg_b = 0.0;
        for (auto i : order) {
            ++t;
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            const auto& x = features[i];
            const double y = labels[i];
            const double margin = y * (dot(w, x) + b);
            const double shrink = 1.0 - eta * lambda;
            for (auto& wj : w) wj *= shrink;
            if (margin < 1.0) {
                for (std::size_t j = 0; j < dim; ++j) w[j] += eta * y * x[j];
                b += eta * y;
            }
            const double norm = std::sqrt(dot(w, w));
            if (norm > radius) {
                const double scale = radius / norm;
                for (auto& wj : w) wj *= scale;
            }
            for (std::size_t j = 0; j < dim; ++j) avg_w[j] += w[j];
            avg_b += b;
        }
        const double n = static_cast<double>(order.size());
        for (auto& v : avg_w) v /= n;
        avg_b /= n;
        if (epoch_objectives) epoch_objectives->push_back(svm_objective(avg_w, avg_b, lambda, features, labels));
    }

    SvmModel model;
    model.weights = std::move(avg_w);
    model.bias = avg_b;
    model.lambda = lambda;
    model.epochs = options.epochs;
    model.seed = options.seed;
    model.layout = std::move(layout);
    return model;
}

double svm_decision(const SvmModel& model, std::span<const double> x) {
    if (x.size() != model.weights.size()) throw ValidationError("svm_decision: dimension mismatch");
    return dot(model.weights, x) + model.bias;
}

// ---------------------------------------------------------------------------
// Model file, version 1 (all integers and reals little-endian):
//   "LKSV" u32 version
//   u32 roster size, then per model: u32 length + UTF-8 bytes
//   u32 raw_dimension
//   u32 length + class order string ("mel,sk,nevus")
//   f64 lambda, u32 epochs, u64 seed
//   u32 dimension, dimension x f64 weights, f64 bias

namespace {

constexpr std::uint32_t kModelVersion = 1;
constexpr std::string_view kClassOrder = "mel,sk,nevus";

void put_string(std::string& out, std::string_view s) {
    detail::put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

}  // namespace

std::string encode_model(const SvmModel& model) {
    std::string out = "LKSV";
    detail::put_u32(out, kModelVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(model.layout.roster.size()));
    for (const auto& m : model.layout.roster) put_string(out, m);
    detail::put_u32(out, static_cast<std::uint32_t>(model.layout.raw_dimension));
    put_string(out, kClassOrder);
    detail::put_f64(out, model.lambda);
    detail::put_u32(out, static_cast<std::uint32_t>(model.epochs));
    detail::put_u64(out, model.seed);
    detail::put_u32(out, static_cast<std::uint32_t>(model.weights.size()));
    for (double w : model.weights) detail::put_f64(out, w);
    detail::put_f64(out, model.bias);
    return out;
}

SvmModel decode_model(std::string_view bytes) {
    auto fail = [](const char* what) -> void { throw ParseError(std::string("svm model: ") + what); };
    detail::Reader in(bytes, fail);
    if (in.bytes(4) != "LKSV") fail("bad magic");
    if (in.u32() != kModelVersion) fail("unsupported version");

    auto get_string = [&] {
        const auto n = in.u32();
        return std::string(in.bytes(n));
    };

    SvmModel m;
    const auto roster_size = in.u32();
    if (roster_size > in.remaining()) fail("roster size exceeds file");
    for (std::uint32_t i = 0; i < roster_size; ++i) m.layout.roster.push_back(get_string());
    m.layout.raw_dimension = in.u32();
    if (get_string() != kClassOrder) fail("unexpected class order");
    m.lambda = in.f64();
    m.epochs = static_cast<int>(in.u32());
    m.seed = in.u64();
    const auto dim = in.u32();
    if (static_cast<std::size_t>(dim) * 8 + 8 != in.remaining()) fail("weight count does not match file size");
    m.weights.resize(dim);
    for (auto& w : m.weights) w = in.f64();
    m.bias = in.f64();
    if (m.layout.dimension() != m.weights.size()) fail("weights do not match the layout");
    return m;
}

// ---------------------------------------------------------------------------

std::map<std::string, TaskLabels> read_labels(std::string_view csv_text) {
    const auto table = csv::Table::parse(csv_text);
    table.require_columns({"image_id", "melanoma", "seborrheic_keratosis"});
    const auto ci = table.column("image_id");
    const auto cm = table.column("melanoma");
    const auto cs = table.column("seborrheic_keratosis");
    std::map<std::string, TaskLabels> out;
    for (const auto& row : table.rows()) {
        auto flag = [&](const std::string& v, const char* what) {
            const double x = csv::parse_real(v, what);
            if (x != 0.0 && x != 1.0) throw ParseError(std::string(what) + " label must be 0 or 1");
            return x == 1.0;
        };
        TaskLabels l{flag(row[cm], "melanoma"), flag(row[cs], "seborrheic_keratosis")};
        if (!out.emplace(row[ci], l).second) throw ParseError("duplicate label row for '" + row[ci] + "'");
    }
    return out;
}

StackModels train_stack(const PredictionTable& table, const FeatureLayout& layout,
                        const std::map<std::string, TaskLabels>& labels, const StackConfig& config,
                        const SvmOptions& options) {
    const auto samples = build_features(table, layout, config);
    std::vector<std::vector<double>> xs;
    std::vector<int> y_mel, y_sk;
    for (const auto& s : samples) {
        auto it = labels.find(s.image_id);
        if (it == labels.end()) continue;
        xs.push_back(s.features);
        y_mel.push_back(it->second.melanoma ? 1 : -1);
        y_sk.push_back(it->second.keratosis ? 1 : -1);
    }
    if (xs.empty()) throw ValidationError("train_stack: no labelled images in the prediction table");
    return {svm_train(xs, y_mel, options, layout), svm_train(xs, y_sk, options, layout)};
}

std::vector<StackScore> stack_predict(const SvmModel& mel_model, const SvmModel& sk_model,
                                      const PredictionTable& table, const StackConfig& config) {
    if (!(mel_model.layout == sk_model.layout)) throw ValidationError("stack_predict: SVM feature layouts differ");
    const auto samples = build_features(table, mel_model.layout, config);
    std::vector<StackScore> out;
    std::vector<double> counts;
    for (const auto& s : samples) {
        if (out.empty() || out.back().image_id != s.image_id) {
            out.push_back({s.image_id, 0.0, 0.0});
            counts.push_back(0.0);
        }
        out.back().score_mel += svm_decision(mel_model, s.features);
        out.back().score_sk += svm_decision(sk_model, s.features);
        counts.back() += 1.0;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].score_mel /= counts[i];
        out[i].score_sk /= counts[i];
    }
    return out;
}

std::string write_scores_csv(const std::vector<StackScore>& scores) {
    std::ostringstream out;
    csv::write_row(out, {"image_id", "score_mel", "score_sk"});
    for (const auto& s : scores) {
        csv::write_row(out, {s.image_id, csv::format_real(s.score_mel), csv::format_real(s.score_sk)});
    }
    return out.str();
}

}  // namespace lesionkit::stacker
