#include <cmath>

#include <gtest/gtest.h>

#include "geoseg/evaluation/metrics.hpp"
#include "oracles/oracles.hpp"

using namespace geoseg;
using namespace geoseg::evaluation;

namespace {

MaskTile mask2x2(std::initializer_list<int> v) {
    MaskTile m(2, 2);
    auto it = v.begin();
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) m.set(r, c, *it++ != 0);
    return m;
}

ConfusionCounts counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    ConfusionCounts c;
    c.tp = tp;
    c.tn = tn;
    c.fp = fp;
    c.fn = fn;
    return c;
}

}  // namespace

TEST(Binarize, Threshold) {
    EXPECT_EQ(binarize(ProbMap(Grid<double>(2, 2, 0.9)))(1, 1), 1);
    EXPECT_EQ(binarize(ProbMap(Grid<double>(2, 2, 0.1)))(1, 1), 0);
    EXPECT_EQ(binarize(ProbMap(Grid<double>(1, 1, 0.5)))(0, 0), 1);
    EXPECT_THROW(binarize(ProbMap(Grid<double>(1, 1, 0.5)), 1.0), ConfigError);
}

TEST(Confusion, Cases) {
    const MaskTile gt = mask2x2({1, 0, 1, 0});
    EXPECT_EQ(confusion(mask2x2({1, 1, 0, 0}), gt), counts(1, 1, 1, 1));
    const auto same = confusion(gt, gt);
    EXPECT_EQ(same.fp + same.fn, 0u);
    const auto inv = confusion(mask2x2({0, 1, 0, 1}), gt);
    EXPECT_EQ(inv.tp + inv.tn, 0u);
    EXPECT_THROW(confusion(MaskTile(2, 3), gt), DataError);
}

TEST(Metrics, HandExample) {
    const auto r = metrics(counts(50, 920, 10, 20));
    EXPECT_NEAR(r.precision(), 0.8333, 1e-4);
    EXPECT_NEAR(r.recall(), 0.7143, 1e-4);
    EXPECT_NEAR(r.f1(), 0.7692, 1e-4);
    EXPECT_NEAR(r.branching_factor(), 0.2, 1e-12);
    EXPECT_NEAR(r.miss_factor(), 0.4, 1e-12);
    EXPECT_NEAR(r.iou(), 0.625, 1e-12);
    EXPECT_NEAR(r.accuracy(), 0.97, 1e-12);
}

TEST(Metrics, PerfectAndUndefined) {
    const auto p = metrics(counts(5, 5, 0, 0));
    for (auto m : {Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::IoU}) EXPECT_EQ(p[m], 1.0);
    EXPECT_EQ(p.branching_factor(), 0.0);
    EXPECT_EQ(p.miss_factor(), 0.0);
    const auto z = metrics(counts(0, 3, 2, 0));
    EXPECT_EQ(z.precision(), 0.0);
    EXPECT_FALSE(z.is_undefined(Metric::Precision));
    EXPECT_TRUE(z.is_undefined(Metric::BranchingFactor));
    EXPECT_THROW(metrics(ConfusionCounts{}), DataError);
}

TEST(Metrics, MatchBruteForceAndIdentities) {
    Rng rng(33);
    for (int i = 0; i < 200; ++i) {
        const std::size_t h = 1 + rng.uniform_int(15), w = 1 + rng.uniform_int(15);
        const MaskTile p = oracle::random_mask(rng, h, w, rng.uniform()), g = oracle::random_mask(rng, h, w, rng.uniform());
        const auto c = confusion(p, g);
        const auto k = oracle::count(p, g);
        ASSERT_EQ(c, counts(k.tp, k.tn, k.fp, k.fn));
        const auto r = metrics(c);
        const auto want = oracle::metrics(k);
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            ASSERT_EQ(r.undefined[m], std::isnan(want[m]));
            if (!r.undefined[m]) ASSERT_EQ(r.values[m], want[m]);
        }
        if (!r.is_undefined(Metric::F1)) {
            const double tp = static_cast<double>(c.tp);
            EXPECT_NEAR(r.f1(), 2 * tp / (2 * tp + static_cast<double>(c.fp + c.fn)), 1e-12);
        }
        if (!r.is_undefined(Metric::Precision) && !r.is_undefined(Metric::Recall) && !r.is_undefined(Metric::F1)) {
            EXPECT_LE(r.iou(), std::min(r.precision(), r.recall()) + 1e-12);
            EXPECT_LE(std::min(r.precision(), r.recall()), r.f1() + 1e-12);
        }
    }
}

TEST(ConfusionMap, Colours) {
    const auto white = confusion_map(MaskTile(2, 2, 1), MaskTile(2, 2, 1));
    for (int b = 0; b < 3; ++b)
        for (double v : white.bands[b].data) EXPECT_EQ(v, 255.0);
    const auto red = confusion_map(MaskTile(2, 2, 1), MaskTile(2, 2, 0));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(red.bands[0].data.values()[i], 255.0);
        EXPECT_EQ(red.bands[1].data.values()[i], 0.0);
        EXPECT_EQ(red.bands[2].data.values()[i], 0.0);
    }
    // 2x2 case: TP (0,0) white, FP (0,1) red, FN (1,0) yellow, TN (1,1) black
    const auto m = confusion_map(mask2x2({1, 1, 0, 0}), mask2x2({1, 0, 1, 0}));
    auto rgb = [&](std::size_t r, std::size_t c) {
        return std::array<double, 3>{m.bands[0].data(r, c), m.bands[1].data(r, c), m.bands[2].data(r, c)};
    };
    EXPECT_EQ(rgb(0, 0), (std::array<double, 3>{255, 255, 255}));
    EXPECT_EQ(rgb(0, 1), (std::array<double, 3>{255, 0, 0}));
    EXPECT_EQ(rgb(1, 0), (std::array<double, 3>{255, 255, 0}));
    EXPECT_EQ(rgb(1, 1), (std::array<double, 3>{0, 0, 0}));
}

TEST(Aggregate, SingleImage) {
    const auto c = counts(3, 4, 1, 2);
    const auto mean = aggregate({{"g", c}}, AggregateMode::MeanOfMetrics).at("g");
    const auto pooled = aggregate({{"g", c}}, AggregateMode::PooledCounts).at("g");
    EXPECT_EQ(mean.values, metrics(c).values);
    EXPECT_EQ(pooled.values, metrics(c).values);
}

TEST(Aggregate, MeanOfIou) {
    // IoU 0.4 and 0.8
    const auto r = aggregate({{"g", counts(2, 0, 3, 0)}, {"g", counts(4, 0, 1, 0)}}).at("g");
    EXPECT_NEAR(r.iou(), 0.6, 1e-12);
}

TEST(Aggregate, PooledDiffersOnUnequalSizes) {
    // 4-px image, all wrong; 10000-px image, nearly perfect
    const auto small = counts(0, 0, 2, 2), big = counts(5000, 4990, 5, 5);
    const auto mean = aggregate({{"g", small}, {"g", big}}, AggregateMode::MeanOfMetrics).at("g");
    const auto pooled = aggregate({{"g", small}, {"g", big}}, AggregateMode::PooledCounts).at("g");
    EXPECT_NEAR(mean.accuracy(), (0.0 + 9990.0 / 10000.0) / 2.0, 1e-12);
    EXPECT_NEAR(pooled.accuracy(), 9990.0 / 10004.0, 1e-12);
    EXPECT_GT(pooled.accuracy() - mean.accuracy(), 0.4);
    // the small image has no defined BF; the mean uses the big one only
    EXPECT_NEAR(mean.branching_factor(), 0.001, 1e-12);
}

TEST(Aggregate, OrderInvariant) {
    Rng rng(12);
    std::vector<std::pair<std::string, ConfusionCounts>> items;
    for (int i = 0; i < 30; ++i)
        items.emplace_back(i % 3 ? "a" : "b", counts(rng.uniform_int(50), rng.uniform_int(50), rng.uniform_int(50),
                                                     1 + rng.uniform_int(50)));
    auto shuffled = items;
    rng.shuffle(std::span(shuffled));
    for (auto mode : {AggregateMode::MeanOfMetrics, AggregateMode::PooledCounts}) {
        const auto a = aggregate(items, mode), b = aggregate(shuffled, mode);
        for (const auto& [k, r] : a) EXPECT_EQ(r.values, b.at(k).values);
    }
    EXPECT_THROW(aggregate({}), DataError);
}
