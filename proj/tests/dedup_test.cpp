#include "lesionkit/dedup.hpp"
#include "lesionkit/error.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace lesionkit;
using namespace lesionkit::dedup;
using imageops::RasterImage;

namespace {

RasterImage random_raster(std::mt19937_64& gen, int w, int h, int ch, int lo = 0, int hi = 255) {
    RasterImage img(w, h, ch);
    std::uniform_int_distribution<int> d(lo, hi);
    for (auto& s : img.samples()) s = static_cast<std::uint8_t>(d(gen));
    return img;
}

ImageHash make_hash(std::string id, std::uint64_t phash, std::uint8_t digest_byte) {
    ImageHash h;
    h.image_id = std::move(id);
    h.phash = phash;
    h.exact_digest.fill(0);
    h.exact_digest[0] = digest_byte;
    return h;
}

std::vector<catalog::ImageRecord> records_for(const std::vector<std::string>& ids, std::mt19937_64* gen = nullptr) {
    std::vector<catalog::ImageRecord> out;
    for (const auto& id : ids) {
        catalog::ImageRecord r;
        r.image_id = id;
        r.path = id;
        r.diagnosis = gen ? static_cast<catalog::Diagnosis>((*gen)() % 3) : catalog::Diagnosis::nevus;
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST(Sha256, KnownVector) {
    EXPECT_EQ(to_hex(sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(digest_from_hex(to_hex(sha256("abc"))), sha256("abc"));
}

TEST(AverageHash, ConstantImageIsZero) {
    for (int v : {0, 1, 128, 255}) {
        EXPECT_EQ(average_hash(RasterImage(13, 7, 3, static_cast<std::uint8_t>(v))), 0u);
        EXPECT_EQ(average_hash(RasterImage(8, 8, 1, static_cast<std::uint8_t>(v))), 0u);
        EXPECT_EQ(average_hash(RasterImage(3, 2, 1, static_cast<std::uint8_t>(v))), 0u);
    }
}

TEST(AverageHash, LeftDarkRightBright) {
    RasterImage img(8, 8, 1);
    for (int y = 0; y < 8; ++y) {
        for (int x = 4; x < 8; ++x) img.at(x, y) = 200;
    }
    EXPECT_EQ(average_hash(img), 0x0F0F0F0F0F0F0F0FULL);
}

TEST(AverageHash, MatchesDirectBitOracleOnEightByEight) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 200; ++trial) {
        auto img = random_raster(gen, 8, 8, 1);
        double mean = 0;
        for (auto s : img.samples()) mean += s;
        mean /= 64.0;
        std::uint64_t expected = 0;
        for (int i = 0; i < 64; ++i) {
            if (img.samples()[i] > mean) expected |= 1ULL << (63 - i);
        }
        EXPECT_EQ(average_hash(img), expected);
    }
}

TEST(AverageHash, BoxResampleOfSixteenByEightAveragesPairs) {
    std::mt19937_64 gen(2);
    auto img = random_raster(gen, 16, 8, 1);
    double mean = 0;
    std::vector<double> cells(64);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            cells[y * 8 + x] = (img.at(2 * x, y) + img.at(2 * x + 1, y)) / 2.0;
            mean += cells[y * 8 + x] / 64.0;
        }
    }
    std::uint64_t expected = 0;
    for (int i = 0; i < 64; ++i) {
        if (cells[i] > mean + 1e-9) expected |= 1ULL << (63 - i);
    }
    // Cells equal to the mean up to rounding are excluded from the random
    // case by checking that none lies within 1e-9.
    for (double c : cells) ASSERT_GT(std::abs(c - mean), 1e-9);
    EXPECT_EQ(average_hash(img), expected);
}

TEST(AverageHash, EmptyImageRejected) { EXPECT_THROW(average_hash(RasterImage()), ValidationError); }

TEST(AverageHash, LosslessReencodeAndBrightnessShift) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int ch = trial % 2 ? 3 : 1;
        auto img = random_raster(gen, 5 + static_cast<int>(gen() % 40), 5 + static_cast<int>(gen() % 40), ch, 0, 200);
        const auto h = average_hash(img);
        EXPECT_EQ(average_hash(imageops::decode_pnm(imageops::encode_pnm(img))), h);
        auto shifted = img;
        const int k = static_cast<int>(gen() % 56);
        for (auto& s : shifted.samples()) s = static_cast<std::uint8_t>(s + k);
        EXPECT_EQ(average_hash(shifted), h);
    }
}

TEST(Hamming, Examples) {
    EXPECT_EQ(hamming_distance(0x1234, 0x1234), 0);
    EXPECT_EQ(hamming_distance(0, ~0ULL), 64);
    EXPECT_EQ(hamming_distance(0x0F, 0x07), 1);
    EXPECT_EQ(oracle::bit_count(0x0F ^ 0x07), 1);
}

TEST(HammingProperty, IsAMetric) {
    std::mt19937_64 gen(4);
    for (int i = 0; i < 10000; ++i) {
        const auto a = gen(), b = gen(), c = gen();
        EXPECT_EQ(hamming_distance(a, b), oracle::bit_count(a ^ b));
        EXPECT_EQ(hamming_distance(a, b), hamming_distance(b, a));
        EXPECT_EQ(hamming_distance(a, a), 0);
        if (a != b) {
            EXPECT_GT(hamming_distance(a, b), 0);
        }
        EXPECT_LE(hamming_distance(a, c), hamming_distance(a, b) + hamming_distance(b, c));
    }
}

TEST(ClusterDuplicates, DistantHashesGiveSingletons) {
    std::vector<ImageHash> hs = {make_hash("c", 0x0, 1), make_hash("a", 0xFFFF, 2), make_hash("b", 0xFFFF0000, 3)};
    auto clusters = cluster_duplicates(hs, 5);
    ASSERT_EQ(clusters.size(), 3u);
    EXPECT_EQ(clusters[0].members, std::vector<std::string>{"a"});
    EXPECT_EQ(clusters[2].cluster_id, 2);
    EXPECT_EQ(clusters[2].members, std::vector<std::string>{"c"});
}

TEST(ClusterDuplicates, ChainMergesTransitively) {
    // a~b at distance 2, b~c at distance 2, a-c at distance 4.
    std::vector<ImageHash> hs = {make_hash("a", 0b0000, 1), make_hash("b", 0b0011, 2), make_hash("c", 0b1111, 3)};
    ASSERT_EQ(hamming_distance(hs[0].phash, hs[2].phash), 4);
    auto clusters = cluster_duplicates(hs, 3);
    ASSERT_EQ(clusters.size(), 1u);
    EXPECT_EQ(clusters[0].members, (std::vector<std::string>{"a", "b", "c"}));

    auto label = oracle::bfs_components(3, {{0, 1}, {1, 2}});
    EXPECT_EQ(label, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(ClusterDuplicates, ExactDigestLinksDistantHashes) {
    auto a = make_hash("a", 0, 7);
    auto b = make_hash("b", ~0ULL, 7);
    auto clusters = cluster_duplicates({a, b}, 0);
    ASSERT_EQ(clusters.size(), 1u);
    EXPECT_EQ(clusters[0].members.size(), 2u);
}

TEST(ClusterDuplicates, Errors) {
    EXPECT_THROW(cluster_duplicates({make_hash("a", 0, 1), make_hash("a", 5, 2)}, 3), ValidationError);
    EXPECT_THROW(cluster_duplicates({}, 65), ValidationError);
    EXPECT_THROW(cluster_duplicates({}, -1), ValidationError);
}

TEST(ClusterDuplicatesProperty, PartitionInvariantToOrderAndMatchesBfs) {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + gen() % 40;
        std::vector<ImageHash> hs;
        for (std::size_t i = 0; i < n; ++i) {
            // Sparse bit patterns so that some pairs fall under the threshold.
            std::uint64_t p = 0;
            for (int k = 0; k < 6; ++k) p |= 1ULL << (gen() % 12);
            hs.push_back(make_hash("id" + std::to_string(1000 + i), p, static_cast<std::uint8_t>(gen() % 200)));
        }
        const int threshold = static_cast<int>(gen() % 5);
        auto clusters = cluster_duplicates(hs, threshold);

        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (hs[i].exact_digest == hs[j].exact_digest ||
                    oracle::bit_count(hs[i].phash ^ hs[j].phash) <= threshold) {
                    edges.emplace_back(i, j);
                }
            }
        }
        auto label = oracle::bfs_components(n, edges);
        std::map<std::string, int> cluster_of;
        std::size_t members = 0;
        for (const auto& c : clusters) {
            for (const auto& m : c.members) {
                EXPECT_TRUE(cluster_of.emplace(m, c.cluster_id).second);
                ++members;
            }
        }
        EXPECT_EQ(members, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                EXPECT_EQ(label[i] == label[j], cluster_of[hs[i].image_id] == cluster_of[hs[j].image_id]);
            }
        }

        auto shuffled = hs;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        EXPECT_EQ(cluster_duplicates(shuffled, threshold), clusters);
    }
}

TEST(ClusterIo, RoundTripAndRepresentatives) {
    std::vector<ImageHash> hs = {make_hash("b", 0, 1), make_hash("a", 1, 2), make_hash("z", ~0ULL, 3)};
    auto clusters = cluster_duplicates(hs, 2);
    EXPECT_EQ(read_clusters(write_clusters(clusters)), clusters);
    EXPECT_EQ(write_clusters(clusters), "cluster_id,image_id\n0,a\n0,b\n1,z\n");
    EXPECT_EQ(cluster_representatives(clusters), (std::vector<std::string>{"a", "z"}));

    auto back = read_hashes(write_hashes(hs));
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[0].image_id, "a");
    EXPECT_EQ(back[2].phash, ~0ULL);
    EXPECT_EQ(back[1].exact_digest, hs[0].exact_digest);
}

TEST(HashImageFile, DigestOverBytesPhashOverRaster) {
    std::mt19937_64 gen(6);
    auto img = random_raster(gen, 12, 9, 3);
    const auto bytes = imageops::encode_pnm(img);
    auto h = hash_image_file("x", bytes);
    EXPECT_EQ(h.exact_digest, sha256(bytes));
    EXPECT_EQ(h.phash, average_hash(img));
    // Same raster with a header comment: different bytes, same phash.
    auto commented = "P6\n# scanner\n12 9\n255\n" + bytes.substr(bytes.find("255\n") + 4);
    auto h2 = hash_image_file("y", commented);
    EXPECT_NE(h2.exact_digest, h.exact_digest);
    EXPECT_EQ(h2.phash, h.phash);
}

TEST(Split, SingletonsSplitExactly) {
    std::vector<std::string> ids;
    for (int i = 0; i < 2000; ++i) ids.push_back("img" + std::to_string(i));
    std::mt19937_64 gen(7);
    auto records = records_for(ids, &gen);
    std::vector<DuplicateCluster> clusters;
    for (std::size_t i = 0; i < ids.size(); ++i) clusters.push_back({static_cast<int>(i), {ids[i]}});
    auto s = contamination_safe_split(records, clusters, 1600, 400, 42);
    EXPECT_EQ(s.count(Side::train), 1600u);
    EXPECT_EQ(s.count(Side::val), 400u);
    EXPECT_EQ(s.sides.size(), 2000u);
}

TEST(Split, StratifiesSingletonsByClass) {
    std::vector<std::string> ids;
    for (int i = 0; i < 1000; ++i) ids.push_back("img" + std::to_string(i));
    auto records = records_for(ids);
    for (int i = 0; i < 200; ++i) records[static_cast<std::size_t>(i)].diagnosis = catalog::Diagnosis::melanoma;
    std::vector<DuplicateCluster> clusters;
    for (std::size_t i = 0; i < ids.size(); ++i) clusters.push_back({static_cast<int>(i), {ids[i]}});
    auto s = contamination_safe_split(records, clusters, 800, 200, 1);
    int mel_val = 0;
    for (int i = 0; i < 200; ++i) mel_val += s.sides.at(ids[static_cast<std::size_t>(i)]) == Side::val;
    EXPECT_NEAR(mel_val, 40, 1);
}

TEST(Split, OversizedClusterRejectedWithDeviation) {
    auto records = records_for({"a", "b", "c", "d", "e"});
    std::vector<DuplicateCluster> clusters = {{0, {"a", "b", "c", "d", "e"}}};
    try {
        contamination_safe_split(records, clusters, 3, 2, 0);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("cluster 0"), std::string::npos);
        EXPECT_NE(msg.find("size deviation 2"), std::string::npos);
    }
}

TEST(Split, PreconditionErrors) {
    auto records = records_for({"a", "b"});
    EXPECT_THROW(contamination_safe_split(records, {{0, {"a"}}, {1, {"b"}}}, 2, 1, 0), ValidationError);
    EXPECT_THROW(contamination_safe_split(records, {{0, {"a"}}}, 1, 1, 0), ValidationError);
    EXPECT_THROW(contamination_safe_split(records, {{0, {"a", "b"}}, {1, {"b"}}}, 1, 1, 0), ValidationError);
    EXPECT_THROW(contamination_safe_split(records, {{0, {"a"}}, {1, {"b", "x"}}}, 1, 1, 0), ValidationError);
}

TEST(SplitProperty, NoClusterSpansSidesSizeBoundDeterminism) {
    std::mt19937_64 gen(8);
    for (int layout = 0; layout < 10; ++layout) {
        std::vector<std::string> ids;
        std::vector<DuplicateCluster> clusters;
        std::size_t max_size = 0;
        for (int c = 0; c < 60; ++c) {
            DuplicateCluster dc{c, {}};
            const std::size_t size = 1 + (gen() % 4 == 0 ? gen() % 6 : 0);
            for (std::size_t k = 0; k < size; ++k) {
                dc.members.push_back("c" + std::to_string(c) + "_" + std::to_string(k));
                ids.push_back(dc.members.back());
            }
            max_size = std::max(max_size, size);
            clusters.push_back(dc);
        }
        auto records = records_for(ids, &gen);
        const std::size_t val_n = ids.size() / 5;
        const std::size_t train_n = ids.size() - val_n;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            auto s = contamination_safe_split(records, clusters, train_n, val_n, seed);
            ASSERT_EQ(s.sides.size(), ids.size());
            for (const auto& c : clusters) {
                const auto side = s.sides.at(c.members.front());
                for (const auto& m : c.members) EXPECT_EQ(s.sides.at(m), side);
            }
            const auto val = static_cast<long long>(s.count(Side::val));
            EXPECT_LE(std::llabs(val - static_cast<long long>(val_n)), static_cast<long long>(max_size) - 1);
            if (seed < 3) {
                auto again = contamination_safe_split(records, clusters, train_n, val_n, seed);
                EXPECT_EQ(again.sides, s.sides);
            }
        }
    }
}

TEST(SplitIo, SortedCsv) {
    auto records = records_for({"b", "a"});
    auto s = contamination_safe_split(records, {{0, {"a"}}, {1, {"b"}}}, 1, 1, 0);
    const auto text = write_split(s);
    EXPECT_EQ(text.substr(0, 15), "image_id,split\n");
    EXPECT_EQ(text.find("a,"), 15u);
}
