#include "lesionkit/ensemble.hpp"

#include "lesionkit/csv.hpp"
#include "lesionkit/error.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace lesionkit::ensemble {

namespace {

void check_probs(const ClassProbs& p, std::string_view where) {
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("probability outside [0, 1] at " + std::string(where));
        }
    }
}

std::vector<std::string> prob_fields(const ClassProbs& p) {
    return {csv::format_real(p[0]), csv::format_real(p[1]), csv::format_real(p[2])};
}

}  // namespace

PredictionTable::PredictionTable(std::vector<PredictionRow> rows) : rows_(std::move(rows)) {
    auto key = [](const PredictionRow& r) { return std::tie(r.image_id, r.model_id, r.replica_idx); };
    std::sort(rows_.begin(), rows_.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& r = rows_[i];
        const std::string where = r.image_id + "/" + r.model_id + "/" + std::to_string(r.replica_idx);
        if (r.image_id.empty() || r.model_id.empty()) throw ValidationError("prediction row with empty id");
        if (r.replica_idx < 0) throw ValidationError("negative replica index at " + where);
        check_probs(r.probs, where);
        if (i > 0 && key(rows_[i - 1]) == key(r)) throw ValidationError("duplicate prediction row " + where);
    }
}

std::vector<std::string> PredictionTable::image_ids() const {
    std::set<std::string> ids;
    for (const auto& r : rows_) ids.insert(r.image_id);
    return {ids.begin(), ids.end()};
}

std::vector<std::string> PredictionTable::model_ids() const {
    std::set<std::string> ids;
    for (const auto& r : rows_) ids.insert(r.model_id);
    return {ids.begin(), ids.end()};
}

PredictionTable PredictionTable::read_csv(std::string_view text) {
    const auto table = csv::Table::parse(text);
    table.require_columns({"image_id", "model_id", "replica_idx", "p_mel", "p_sk", "p_nevus"});
    const auto ci = table.column("image_id");
    const auto cm = table.column("model_id");
    const auto cr = table.column("replica_idx");
    const std::array<std::size_t, 3> cp{table.column("p_mel"), table.column("p_sk"), table.column("p_nevus")};
    std::vector<PredictionRow> rows;
    rows.reserve(table.size());
    for (const auto& row : table.rows()) {
        PredictionRow r;
        r.image_id = row[ci];
        r.model_id = row[cm];
        r.replica_idx = static_cast<int>(csv::parse_integer(row[cr], "replica_idx"));
        for (std::size_t k = 0; k < kNumClasses; ++k) r.probs[k] = csv::parse_real(row[cp[k]], "probability");
        rows.push_back(std::move(r));
    }
    return PredictionTable(std::move(rows));
}

std::string PredictionTable::write_csv() const {
    std::ostringstream out;
    csv::write_row(out, {"image_id", "model_id", "replica_idx", "p_mel", "p_sk", "p_nevus"});
    for (const auto& r : rows_) {
        auto f = prob_fields(r.probs);
        csv::write_row(out, {r.image_id, r.model_id, std::to_string(r.replica_idx), f[0], f[1], f[2]});
    }
    return out.str();
}

std::vector<PooledRow> pool_replicas(const PredictionTable& table, PoolMode mode) {
    std::vector<PooledRow> out;
    const auto& rows = table.rows();
    // Rows are sorted by (image, model, replica): each group is contiguous.
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        ClassProbs acc{};
        if (mode == PoolMode::max) acc.fill(0.0);
        while (j < rows.size() && rows[j].image_id == rows[i].image_id && rows[j].model_id == rows[i].model_id) {
            for (std::size_t k = 0; k < kNumClasses; ++k) {
                acc[k] = mode == PoolMode::mean ? acc[k] + rows[j].probs[k] : std::max(acc[k], rows[j].probs[k]);
            }
            ++j;
        }
        if (mode == PoolMode::mean) {
            for (auto& v : acc) v = std::min(1.0, v / static_cast<double>(j - i));
        }
        out.push_back({rows[i].image_id, rows[i].model_id, acc});
        i = j;
    }
    return out;
}

std::vector<AveragedRow> average_models(const std::vector<PooledRow>& pooled) {
    std::map<std::string, std::map<std::string, const PooledRow*>> by_image;
    std::set<std::string> models;
    for (const auto& r : pooled) {
        check_probs(r.probs, r.image_id + "/" + r.model_id);
        if (!by_image[r.image_id].emplace(r.model_id, &r).second) {
            throw ValidationError("duplicate pooled row " + r.image_id + "/" + r.model_id);
        }
        models.insert(r.model_id);
    }

    std::string missing;
    for (const auto& [image, per_model] : by_image) {
        for (const auto& m : models) {
            if (!per_model.contains(m)) missing += (missing.empty() ? "" : ", ") + ("(" + image + ", " + m + ")");
        }
    }
    if (!missing.empty()) throw ValidationError("ragged model coverage; missing " + missing);

    std::vector<AveragedRow> out;
    for (const auto& [image, per_model] : by_image) {
        ClassProbs acc{};
        for (const auto& [m, row] : per_model) {
            for (std::size_t k = 0; k < kNumClasses; ++k) acc[k] += row->probs[k];
        }
        for (auto& v : acc) v = std::min(1.0, v / static_cast<double>(per_model.size()));
        out.push_back({image, acc});
    }
    return out;
}

std::string write_pooled_csv(const std::vector<PooledRow>& rows) {
    std::ostringstream out;
    csv::write_row(out, {"image_id", "model_id", "p_mel", "p_sk", "p_nevus"});
    for (const auto& r : rows) {
        auto f = prob_fields(r.probs);
        csv::write_row(out, {r.image_id, r.model_id, f[0], f[1], f[2]});
    }
    return out.str();
}

std::string write_averaged_csv(const std::vector<AveragedRow>& rows) {
    std::ostringstream out;
    csv::write_row(out, {"image_id", "p_mel", "p_sk", "p_nevus"});
    for (const auto& r : rows) {
        auto f = prob_fields(r.probs);
        csv::write_row(out, {r.image_id, f[0], f[1], f[2]});
    }
    return out.str();
}

FloatPlane average_masks(const std::vector<FloatPlane>& stack) {
    if (stack.empty()) throw ValidationError("average_masks: empty stack");
    const auto& first = stack.front();
    if (first.channels() != 1) throw ValidationError("average_masks: masks must be single-channel");
    // Running mean: a stack of identical masks averages to that mask exactly.
    std::vector<double> acc(first.size(), 0.0);
    double n = 0.0;
    for (const auto& m : stack) {
        if (!m.same_shape(first)) throw ValidationError("average_masks: shape mismatch");
        n += 1.0;
        const auto s = m.samples();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (s[i] - acc[i]) / n;
    }
    return FloatPlane(first.width(), first.height(), 1, std::move(acc));
}

FloatPlane binarize(const FloatPlane& mask, double threshold) {
    std::vector<double> out(mask.size());
    const auto s = mask.samples();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s[i] >= threshold ? 1.0 : 0.0;
    return FloatPlane(mask.width(), mask.height(), mask.channels(), std::move(out));
}

}  // namespace lesionkit::ensemble
