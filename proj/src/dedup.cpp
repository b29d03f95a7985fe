#include "lesionkit/dedup.hpp"

#include "lesionkit/csv.hpp"
#include "lesionkit/error.hpp"
#include "lesionkit/rng.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace lesionkit::dedup {

Digest sha256(std::string_view bytes) {
    Digest out{};
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size()) {
        throw Error("sha256 computation failed");
    }
    return out;
}

std::string to_hex(const Digest& d) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : d) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xF]);
    }
    return s;
}

Digest digest_from_hex(std::string_view hex) {
    if (hex.size() != 64) throw ParseError("digest must be 64 hex characters");
    auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw ParseError("invalid hex digit in digest");
    };
    Digest d{};
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    }
    return d;
}

// ---------------------------------------------------------------------------

std::uint64_t average_hash(const imageops::RasterImage& img) {
    if (img.empty() || img.width() < 1 || img.height() < 1) throw ValidationError("average_hash: empty image");
    const std::uint64_t w = static_cast<std::uint64_t>(img.width());
    const std::uint64_t h = static_cast<std::uint64_t>(img.height());
    if (w * h > (std::uint64_t(1) << 32)) throw ValidationError("average_hash: image too large");

    // Luma scaled by 1000 keeps the weights integral.
    auto luma = [&](int x, int y) -> std::uint64_t {
        if (img.channels() == 1) return 1000u * img.at(x, y);
        return 299u * img.at(x, y, 0) + 587u * img.at(x, y, 1) + 114u * img.at(x, y, 2);
    };

    // In units where a source pixel spans 8 and an output cell spans the
    // source extent, pixel i covers [8i, 8i+8) and cell j covers [jW, jW+W).
    auto overlaps = [](std::uint64_t extent, std::uint64_t i, auto&& visit) {
        const std::uint64_t lo = 8 * i;
        const std::uint64_t hi = lo + 8;
        for (std::uint64_t j = lo / extent; j < 8 && j * extent < hi; ++j) {
            const std::uint64_t a = std::max(lo, j * extent);
            const std::uint64_t b = std::min(hi, (j + 1) * extent);
            if (b > a) visit(j, b - a);
        }
    };

    std::array<std::uint64_t, 64> cells{};
    std::array<std::uint64_t, 8> row_cells{};
    for (std::uint64_t y = 0; y < h; ++y) {
        row_cells.fill(0);
        for (std::uint64_t x = 0; x < w; ++x) {
            const auto l = luma(static_cast<int>(x), static_cast<int>(y));
            overlaps(w, x, [&](std::uint64_t jx, std::uint64_t ov) { row_cells[jx] += l * ov; });
        }
        overlaps(h, y, [&](std::uint64_t jy, std::uint64_t ov) {
            for (int jx = 0; jx < 8; ++jx) cells[jy * 8 + jx] += row_cells[jx] * ov;
        });
    }

    // Every cell has the same area, so comparing sums compares averages:
    // cell > mean  <=>  64 * cell > total.
    const auto total = std::accumulate(cells.begin(), cells.end(), std::uint64_t(0));
    std::uint64_t hash = 0;
    for (int i = 0; i < 64; ++i) {
        if (64 * cells[i] > total) hash |= std::uint64_t(1) << (63 - i);
    }
    return hash;
}

ImageHash hash_image_file(std::string image_id, std::string_view file_bytes) {
    ImageHash h;
    h.image_id = std::move(image_id);
    h.exact_digest = sha256(file_bytes);
    h.phash = average_hash(imageops::decode_pnm(file_bytes));
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex64(std::string_view s) {
    if (s.size() != 16) throw ParseError("phash must be 16 hex characters");
    std::uint64_t v = 0;
    for (char c : s) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else throw ParseError("invalid hex digit in phash");
        v = v << 4 | static_cast<std::uint64_t>(d);
    }
    return v;
}

class DisjointSet {
public:
    explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned char> rank_;
};

}  // namespace

std::string write_hashes(const std::vector<ImageHash>& hashes) {
    auto sorted = hashes;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    std::ostringstream out;
    csv::write_row(out, {"image_id", "sha256", "ahash"});
    for (const auto& h : sorted) csv::write_row(out, {h.image_id, to_hex(h.exact_digest), hex64(h.phash)});
    return out.str();
}

std::vector<ImageHash> read_hashes(std::string_view csv_text) {
    const auto table = csv::Table::parse(csv_text);
    table.require_columns({"image_id", "sha256", "ahash"});
    const auto ci = table.column("image_id");
    const auto cd = table.column("sha256");
    const auto ch = table.column("ahash");
    std::vector<ImageHash> out;
    for (const auto& row : table.rows()) {
        out.push_back({row[ci], digest_from_hex(row[cd]), parse_hex64(row[ch])});
    }
    return out;
}

std::vector<DuplicateCluster> cluster_duplicates(const std::vector<ImageHash>& hashes, int threshold) {
    if (threshold < 0 || threshold > 64) throw ValidationError("hamming threshold must lie in [0, 64]");

    // Work on id-sorted input so the result does not depend on input order.
    std::vector<const ImageHash*> items;
    items.reserve(hashes.size());
    for (const auto& h : hashes) items.push_back(&h);
    std::sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });
    for (std::size_t i = 1; i < items.size(); ++i) {
        if (items[i]->image_id == items[i - 1]->image_id) {
            throw ValidationError("duplicate image_id '" + items[i]->image_id + "' in hash list");
        }
    }

    const std::size_t n = items.size();
    DisjointSet sets(n);

    std::map<Digest, std::size_t> first_with_digest;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = first_with_digest.emplace(items[i]->exact_digest, i);
        if (!inserted) sets.unite(it->second, i);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto pi = items[i]->phash;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (hamming_distance(pi, items[j]->phash) <= threshold) sets.unite(i, j);
        }
    }

    // Items are id-sorted, so the first index seen for a root is that
    // component's smallest member and clusters come out in id order.
    std::vector<DuplicateCluster> clusters;
    std::unordered_map<std::size_t, std::size_t> cluster_of_root;
    for (std::size_t i = 0; i < n; ++i) {
        const auto root = sets.find(i);
        auto [it, inserted] = cluster_of_root.emplace(root, clusters.size());
        if (inserted) {
            clusters.push_back({static_cast<int>(clusters.size()), {}});
        }
        clusters[it->second].members.push_back(items[i]->image_id);
    }
    return clusters;
}

std::string write_clusters(const std::vector<DuplicateCluster>& clusters) {
    std::vector<std::pair<std::string, int>> rows;
    for (const auto& c : clusters) {
        for (const auto& m : c.members) rows.emplace_back(m, c.cluster_id);
    }
    std::sort(rows.begin(), rows.end());
    std::ostringstream out;
    csv::write_row(out, {"cluster_id", "image_id"});
    for (const auto& [id, cid] : rows) csv::write_row(out, {std::to_string(cid), id});
    return out.str();
}

std::vector<DuplicateCluster> read_clusters(std::string_view csv_text) {
    const auto table = csv::Table::parse(csv_text);
    table.require_columns({"cluster_id", "image_id"});
    const auto cc = table.column("cluster_id");
    const auto ci = table.column("image_id");
    std::map<int, std::vector<std::string>> by_id;
    for (const auto& row : table.rows()) {
        const auto cid = csv::parse_integer(row[cc], "cluster_id");
        by_id[static_cast<int>(cid)].push_back(row[ci]);
    }
    std::vector<DuplicateCluster> out;
    for (auto& [cid, members] : by_id) {
        std::sort(members.begin(), members.end());
        out.push_back({cid, std::move(members)});
    }
    return out;
}

std::vector<std::string> cluster_representatives(const std::vector<DuplicateCluster>& clusters) {
    std::vector<std::string> reps;
    for (const auto& c : clusters) {
        if (!c.members.empty()) reps.push_back(*std::min_element(c.members.begin(), c.members.end()));
    }
    std::sort(reps.begin(), reps.end());
    return reps;
}

// ---------------------------------------------------------------------------

std::size_t SplitAssignment::count(Side s) const {
    return static_cast<std::size_t>(
        std::count_if(sides.begin(), sides.end(), [s](const auto& kv) { return kv.second == s; }));
}

SplitAssignment contamination_safe_split(const std::vector<catalog::ImageRecord>& records,
                                         const std::vector<DuplicateCluster>& clusters, std::size_t train_n,
                                         std::size_t val_n, std::uint64_t seed) {
    using catalog::Diagnosis;
    if (train_n + val_n != records.size()) {
        throw ValidationError("split sizes " + std::to_string(train_n) + "+" + std::to_string(val_n) +
                              " do not add up to " + std::to_string(records.size()) + " records");
    }

    std::unordered_map<std::string, Diagnosis> diagnosis_of;
    for (const auto& r : records) diagnosis_of.emplace(r.image_id, r.diagnosis);
    if (diagnosis_of.size() != records.size()) throw ValidationError("split: duplicate image_id in records");

    std::unordered_set<std::string> seen;
    for (const auto& c : clusters) {
        if (c.members.empty()) throw ValidationError("split: cluster " + std::to_string(c.cluster_id) + " is empty");
        for (const auto& m : c.members) {
            if (!diagnosis_of.contains(m)) {
                throw ValidationError("split: cluster member '" + m + "' is not among the records");
            }
            if (!seen.insert(m).second) throw ValidationError("split: image '" + m + "' appears in two clusters");
        }
    }
    if (seen.size() != records.size()) throw ValidationError("split: some records belong to no cluster");

    const std::size_t cap = std::max(train_n, val_n);
    for (const auto& c : clusters) {
        if (c.members.size() > cap) {
            throw ValidationError("split: cluster " + std::to_string(c.cluster_id) + " holds " +
                                  std::to_string(c.members.size()) + " images, exceeding both sides (size deviation " +
                                  std::to_string(c.members.size() - cap) + ")");
        }
    }

    // Canonical order first so the shuffle depends only on the seed.
    std::vector<const DuplicateCluster*> order;
    for (const auto& c : clusters) order.push_back(&c);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->members.front() < b->members.front(); });
    Rng rng(seed);
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(),
                     [](auto* a, auto* b) { return a->members.size() > b->members.size(); });

    std::map<Diagnosis, double> class_total;
    for (const auto& r : records) class_total[r.diagnosis] += 1.0;
    const double n_total = static_cast<double>(records.size());

    struct SideState {
        std::size_t target;
        std::size_t assigned = 0;
        std::map<Diagnosis, double> per_class;
        long long remaining() const { return static_cast<long long>(target) - static_cast<long long>(assigned); }
    };
    std::array<SideState, 2> state{SideState{train_n, 0, {}}, SideState{val_n, 0, {}}};

    auto quota_left = [&](const SideState& s, const std::map<Diagnosis, double>& counts) {
        double score = 0.0;
        for (const auto& [d, m] : counts) {
            const double quota = class_total[d] * static_cast<double>(s.target) / n_total;
            const auto it = s.per_class.find(d);
            const double used = it == s.per_class.end() ? 0.0 : it->second;
            score += m * (1.0 - used / quota);
        }
        return score;
    };

    SplitAssignment out;
    out.seed = seed;
    out.train_n = train_n;
    out.val_n = val_n;
    for (const auto* c : order) {
        const auto m = static_cast<long long>(c->members.size());
        std::map<Diagnosis, double> counts;
        for (const auto& id : c->members) counts[diagnosis_of.at(id)] += 1.0;

        const bool fits_train = state[0].remaining() >= m;
        const bool fits_val = state[1].remaining() >= m;
        int side;
        if (fits_train && fits_val) {
            side = quota_left(state[1], counts) > quota_left(state[0], counts) ? 1 : 0;
        } else if (fits_train != fits_val) {
            side = fits_train ? 0 : 1;
        } else {
            side = state[1].remaining() > state[0].remaining() ? 1 : 0;
        }

        auto& s = state[side];
        s.assigned += c->members.size();
        for (const auto& [d, k] : counts) s.per_class[d] += k;
        for (const auto& id : c->members) out.sides[id] = side == 0 ? Side::train : Side::val;
    }
    return out;
}

std::string write_split(const SplitAssignment& split) {
    std::ostringstream out;
    csv::write_row(out, {"image_id", "split"});
    for (const auto& [id, side] : split.sides) csv::write_row(out, {id, side == Side::train ? "train" : "val"});
    return out.str();
}

}  // namespace lesionkit::dedup
