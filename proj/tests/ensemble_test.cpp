#include "lesionkit/ensemble.hpp"
#include "lesionkit/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace lesionkit;
using namespace lesionkit::ensemble;

namespace {

PredictionRow row(std::string img, std::string model, int rep, double mel, double sk, double nev) {
    return {std::move(img), std::move(model), rep, {mel, sk, nev}};
}

PredictionTable random_table(std::mt19937_64& gen, int images, int models, int replicas) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<PredictionRow> rows;
    for (int i = 0; i < images; ++i) {
        for (int m = 0; m < models; ++m) {
            for (int r = 0; r < replicas; ++r) {
                rows.push_back(row("img" + std::to_string(i), "model" + std::to_string(m), r, u(gen), u(gen), u(gen)));
            }
        }
    }
    return PredictionTable(std::move(rows));
}

FloatPlane random_plane(std::mt19937_64& gen, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FloatPlane p(w, h, 1);
    for (auto& v : p.samples()) v = u(gen);
    return p;
}

}  // namespace

TEST(PredictionTable, ValidatesRows) {
    EXPECT_THROW(PredictionTable({row("a", "m", 0, 1.2, 0, 0)}), ValidationError);
    EXPECT_THROW(PredictionTable({row("a", "m", 0, 0.1, 0, 0), row("a", "m", 0, 0.2, 0, 0)}), ValidationError);
    EXPECT_THROW(PredictionTable({row("a", "m", -1, 0.1, 0, 0)}), ValidationError);
    EXPECT_THROW(PredictionTable({row("", "m", 0, 0.1, 0, 0)}), ValidationError);
}

TEST(PredictionTable, CsvRoundTrip) {
    std::mt19937_64 gen(1);
    auto t = random_table(gen, 3, 2, 2);
    auto back = PredictionTable::read_csv(t.write_csv());
    ASSERT_EQ(back.rows().size(), t.rows().size());
    for (std::size_t i = 0; i < t.rows().size(); ++i) EXPECT_EQ(back.rows()[i].probs, t.rows()[i].probs);
    EXPECT_THROW(PredictionTable::read_csv("image_id,model_id,p_mel\n"), ParseError);
}

TEST(AverageMasks, Examples) {
    std::mt19937_64 gen(2);
    auto m = random_plane(gen, 7, 5);
    EXPECT_EQ(average_masks({m, m, m}), m);
    EXPECT_EQ(average_masks({m, m, m, m}), m);
    auto half = average_masks({FloatPlane(2, 2, 1, 0.0), FloatPlane(2, 2, 1, 1.0)});
    for (double v : half.samples()) EXPECT_EQ(v, 0.5);
    EXPECT_THROW(average_masks({}), ValidationError);
    EXPECT_THROW(average_masks({FloatPlane(2, 2, 1), FloatPlane(2, 3, 1)}), ValidationError);
}

TEST(AverageMasks, FourRandomMatchesPixelSumOracle) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<FloatPlane> stack;
        for (int k = 0; k < 4; ++k) stack.push_back(random_plane(gen, 9, 6));
        auto avg = average_masks(stack);
        for (int y = 0; y < 6; ++y) {
            for (int x = 0; x < 9; ++x) {
                double sum = 0;
                for (const auto& p : stack) sum += p.at(x, y);
                EXPECT_NEAR(avg.at(x, y), sum / 4.0, 1e-12);
            }
        }
        auto permuted = stack;
        std::shuffle(permuted.begin(), permuted.end(), gen);
        auto avg2 = average_masks(permuted);
        for (std::size_t i = 0; i < avg.size(); ++i) EXPECT_NEAR(avg.samples()[i], avg2.samples()[i], 1e-12);
    }
}

TEST(Binarize, TieIsForeground) {
    FloatPlane p(3, 1, 1, std::vector<double>{0.5, 0.49, 1.0});
    auto b = binarize(p, 0.5);
    EXPECT_EQ(b.samples()[0], 1.0);
    EXPECT_EQ(b.samples()[1], 0.0);
    EXPECT_EQ(b.samples()[2], 1.0);
    const auto all = binarize(p, 0.0);
    for (double v : all.samples()) EXPECT_EQ(v, 1.0);
    const auto none = binarize(p, 1.0 + 1e-12);
    for (double v : none.samples()) EXPECT_EQ(v, 0.0);
}

TEST(PoolReplicas, Examples) {
    PredictionTable single({row("a", "m", 0, 0.1, 0.2, 0.7)});
    auto p = pool_replicas(single);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].probs, (ClassProbs{0.1, 0.2, 0.7}));

    PredictionTable three({row("a", "m", 0, 0.2, 0, 0), row("a", "m", 1, 0.4, 0, 0), row("a", "m", 2, 0.6, 0, 0)});
    EXPECT_NEAR(pool_replicas(three, PoolMode::mean)[0].probs[kMelanoma], 0.4, 1e-15);
    EXPECT_EQ(pool_replicas(three, PoolMode::max)[0].probs[kMelanoma], 0.6);
}

TEST(AverageModels, Examples) {
    std::vector<PooledRow> one{{"a", "m1", {0.1, 0.2, 0.3}}};
    EXPECT_EQ(average_models(one)[0].probs, (ClassProbs{0.1, 0.2, 0.3}));
    std::vector<PooledRow> two{{"a", "m1", {0.3, 0, 0}}, {"a", "m2", {0.7, 0, 0}}};
    EXPECT_NEAR(average_models(two)[0].probs[kMelanoma], 0.5, 1e-15);
}

TEST(AverageModels, RaggedCoverageListsMissingPairs) {
    std::vector<PooledRow> rows{{"a", "m1", {0, 0, 0}}, {"a", "m2", {0, 0, 0}}, {"b", "m1", {0, 0, 0}}};
    try {
        average_models(rows);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("(b, m2)"), std::string::npos);
    }
}

TEST(AverageModels, SevenModelsMatchSumOverSeven) {
    std::mt19937_64 gen(4);
    auto table = random_table(gen, 5, 7, 3);
    auto avg = average_models(pool_replicas(table));
    ASSERT_EQ(avg.size(), 5u);
    for (const auto& a : avg) {
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            double sum = 0;
            for (int m = 0; m < 7; ++m) {
                double rsum = 0;
                for (const auto& r : table.rows()) {
                    if (r.image_id == a.image_id && r.model_id == "model" + std::to_string(m)) rsum += r.probs[k];
                }
                sum += rsum / 3.0;
            }
            EXPECT_NEAR(a.probs[k], sum / 7.0, 1e-12);
        }
    }
}

TEST(EnsembleProperty, PoolingCommutesWithModelAveraging) {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int models = 1 + static_cast<int>(gen() % 7), reps = 1 + static_cast<int>(gen() % 4);
        auto table = random_table(gen, 4, models, reps);
        auto pool_then_avg = average_models(pool_replicas(table));

        // Average over models per replica first, then pool the replicas.
        std::vector<PredictionRow> per_replica;
        for (int i = 0; i < 4; ++i) {
            for (int r = 0; r < reps; ++r) {
                ClassProbs acc{};
                for (const auto& row : table.rows()) {
                    if (row.image_id == "img" + std::to_string(i) && row.replica_idx == r) {
                        for (std::size_t k = 0; k < kNumClasses; ++k) acc[k] += row.probs[k] / models;
                    }
                }
                per_replica.push_back({"img" + std::to_string(i), "avg", r, acc});
            }
        }
        auto avg_then_pool = pool_replicas(PredictionTable(per_replica));
        ASSERT_EQ(avg_then_pool.size(), pool_then_avg.size());
        for (std::size_t i = 0; i < pool_then_avg.size(); ++i) {
            for (std::size_t k = 0; k < kNumClasses; ++k) {
                EXPECT_NEAR(pool_then_avg[i].probs[k], avg_then_pool[i].probs[k], 1e-12);
                EXPECT_GE(pool_then_avg[i].probs[k], 0.0);
                EXPECT_LE(pool_then_avg[i].probs[k], 1.0);
            }
        }
    }
}

TEST(EnsembleProperty, AverageModelsIgnoresRowOrder) {
    std::mt19937_64 gen(6);
    auto pooled = pool_replicas(random_table(gen, 6, 4, 2));
    auto base = average_models(pooled);
    std::shuffle(pooled.begin(), pooled.end(), gen);
    auto shuffled = average_models(pooled);
    ASSERT_EQ(base.size(), shuffled.size());
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(base[i].probs, shuffled[i].probs);
}

TEST(EnsembleCsv, HeadersDropColumns) {
    std::vector<PooledRow> pooled{{"a", "m", {0.5, 0.25, 0.25}}};
    EXPECT_EQ(write_pooled_csv(pooled), "image_id,model_id,p_mel,p_sk,p_nevus\na,m,0.5,0.25,0.25\n");
    EXPECT_EQ(write_averaged_csv(average_models(pooled)), "image_id,p_mel,p_sk,p_nevus\na,0.5,0.25,0.25\n");
}
