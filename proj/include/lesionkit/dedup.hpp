#pragma once

#include "lesionkit/catalog.hpp"
#include "lesionkit/imageops.hpp"

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lesionkit::dedup {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& d);
Digest digest_from_hex(std::string_view hex);

// 8x8 average hash. The raster is reduced to luma (0.299 R + 0.587 G +
// 0.114 B, identity for one channel), box-resampled to 8x8 by exact area
// weighting, and bit i (row-major, MSB first) is set iff cell i is strictly
// brighter than the mean of the 64 cells. Computed in integer arithmetic,
// so the result is exact.
std::uint64_t average_hash(const imageops::RasterImage& img);

inline int hamming_distance(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

struct ImageHash {
    std::string image_id;
    Digest exact_digest{};
    std::uint64_t phash = 0;
};

// Digest over the raw file bytes; phash over the decoded PNM raster.
ImageHash hash_image_file(std::string image_id, std::string_view file_bytes);

std::string write_hashes(const std::vector<ImageHash>& hashes);
std::vector<ImageHash> read_hashes(std::string_view csv_text);

struct DuplicateCluster {
    int cluster_id = 0;
    std::vector<std::string> members;  // sorted

    friend bool operator==(const DuplicateCluster&, const DuplicateCluster&) = default;
};

inline constexpr int kDefaultHammingThreshold = 5;

// Links two images when their digests are equal or their phashes differ in
// at most `threshold` bits and returns the connected components. Clusters
// are numbered from 0 in order of their smallest member id.
std::vector<DuplicateCluster> cluster_duplicates(const std::vector<ImageHash>& hashes, int threshold);

std::string write_clusters(const std::vector<DuplicateCluster>& clusters);
std::vector<DuplicateCluster> read_clusters(std::string_view csv_text);

// Smallest member id of every cluster: the set kept when duplicates are
// collapsed rather than only kept together.
std::vector<std::string> cluster_representatives(const std::vector<DuplicateCluster>& clusters);

enum class Side { train, val };

struct SplitAssignment {
    std::map<std::string, Side> sides;
    std::uint64_t seed = 0;
    std::size_t train_n = 0;
    std::size_t val_n = 0;

    std::size_t count(Side s) const;
};

// Assigns whole clusters to train or val. Clusters are shuffled with the
// seed and then placed largest first; a cluster that fits only one side
// goes there, one that fits both goes to the side with more of its classes'
// stratification quota left, and one that fits neither goes to the side
// with more room. Ties go to train. The resulting val size is within
// (largest cluster - 1) of val_n.
//
// Throws ValidationError when sizes do not add up to the record count, when
// a record is not in exactly one cluster, or when a cluster is larger than
// both requested sides.
SplitAssignment contamination_safe_split(const std::vector<catalog::ImageRecord>& records,
                                         const std::vector<DuplicateCluster>& clusters, std::size_t train_n,
                                         std::size_t val_n, std::uint64_t seed);

std::string write_split(const SplitAssignment& split);

}  // namespace lesionkit::dedup
