#ifndef GEOSEG_EVALUATION_METRICS_HPP
#define GEOSEG_EVALUATION_METRICS_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::evaluation {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const noexcept { return tp + tn + fp + fn; }

    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

enum class Metric { Accuracy, Precision, Recall, F1, BranchingFactor, MissFactor, IoU };
inline constexpr std::size_t kMetricCount = 7;

/// The seven pixel metrics. A metric whose denominator is zero is
/// reported as 0 with its undefined flag set. IoU is a fraction in [0, 1].
struct MetricReport {
    std::array<double, kMetricCount> values{};
    std::array<bool, kMetricCount> undefined{};

    double operator[](Metric m) const noexcept { return values[static_cast<std::size_t>(m)]; }
    bool is_undefined(Metric m) const noexcept { return undefined[static_cast<std::size_t>(m)]; }

    double accuracy() const noexcept { return (*this)[Metric::Accuracy]; }
    double precision() const noexcept { return (*this)[Metric::Precision]; }
    double recall() const noexcept { return (*this)[Metric::Recall]; }
    double f1() const noexcept { return (*this)[Metric::F1]; }
    double branching_factor() const noexcept { return (*this)[Metric::BranchingFactor]; }
    double miss_factor() const noexcept { return (*this)[Metric::MissFactor]; }
    double iou() const noexcept { return (*this)[Metric::IoU]; }
};

/// Building iff p >= threshold.
inline MaskTile binarize(const ProbMap& p, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("binarize: threshold must lie in (0,1)");
    Grid<std::uint8_t> out(p.height(), p.width());
    const auto src = p.data().values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= threshold ? 1 : 0;
    return MaskTile(std::move(out));
}

inline ConfusionCounts confusion(const MaskTile& pred, const MaskTile& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw DataError("confusion: prediction and ground truth shapes differ");
    ConfusionCounts c;
    const auto p = pred.data().values();
    const auto g = gt.data().values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i]) (g[i] ? c.tp : c.fp)++;
        else (g[i] ? c.fn : c.tn)++;
    }
    return c;
}

inline MetricReport metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw DataError("metrics: empty confusion counts");
    MetricReport r;
    auto set = [&](Metric m, double num, double den) {
        const auto i = static_cast<std::size_t>(m);
        if (den == 0.0) {
            r.values[i] = 0.0;
            r.undefined[i] = true;
        } else {
            r.values[i] = num / den;
        }
    };
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    set(Metric::Accuracy, tp + tn, tp + tn + fp + fn);
    set(Metric::Precision, tp, tp + fp);
    set(Metric::Recall, tp, tp + fn);
    if (r.is_undefined(Metric::Precision) || r.is_undefined(Metric::Recall)) {
        set(Metric::F1, 0.0, 0.0);
    } else {
        const double p = r.precision(), q = r.recall();
        set(Metric::F1, 2.0 * p * q, p + q);
    }
    set(Metric::BranchingFactor, fp, tp);
    set(Metric::MissFactor, fn, tp);
    set(Metric::IoU, tp, tp + fn + fp);
    return r;
}

/// Three-band evaluation map: TP white, TN black, FP red, FN yellow.
inline Tile confusion_map(const MaskTile& pred, const MaskTile& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw DataError("confusion_map: prediction and ground truth shapes differ");
    Grid<double> r(pred.height(), pred.width()), g(pred.height(), pred.width()), b(pred.height(), pred.width());
    const auto p = pred.data().values();
    const auto t = gt.data().values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::array<double, 3> rgb{};
        if (p[i] && t[i]) rgb = {255, 255, 255};
        else if (p[i]) rgb = {255, 0, 0};
        else if (t[i]) rgb = {255, 255, 0};
        r.values()[i] = rgb[0];
        g.values()[i] = rgb[1];
        b.values()[i] = rgb[2];
    }
    return make_rgb_tile(std::move(r), std::move(g), std::move(b));
}

enum class AggregateMode { MeanOfMetrics, PooledCounts };

/// Per-group reports. Mean-of-metrics averages each metric over the
/// group's images where it is defined (flagged undefined only when no
/// image defines it); pooled-counts sums the counts and evaluates once.
inline std::map<std::string, MetricReport> aggregate(
    const std::vector<std::pair<std::string, ConfusionCounts>>& items,
    AggregateMode mode = AggregateMode::MeanOfMetrics) {
    if (items.empty()) throw DataError("aggregate: no reports");
    std::map<std::string, std::vector<ConfusionCounts>> groups;
    for (const auto& [key, counts] : items) groups[key].push_back(counts);
    std::map<std::string, MetricReport> out;
    for (auto& [key, members] : groups) {
        // canonical order makes the floating-point mean independent of input order
        std::sort(members.begin(), members.end(), [](const ConfusionCounts& a, const ConfusionCounts& b) {
            return std::tie(a.tp, a.tn, a.fp, a.fn) < std::tie(b.tp, b.tn, b.fp, b.fn);
        });
        if (members.empty()) throw DataError("aggregate: empty group '" + key + "'");
        if (mode == AggregateMode::PooledCounts) {
            ConfusionCounts sum;
            for (const auto& c : members) sum += c;
            out[key] = metrics(sum);
            continue;
        }
        MetricReport mean;
        std::array<std::size_t, kMetricCount> defined{};
        for (const auto& c : members) {
            const MetricReport r = metrics(c);
            for (std::size_t i = 0; i < kMetricCount; ++i) {
                if (r.undefined[i]) continue;
                mean.values[i] += r.values[i];
                ++defined[i];
            }
        }
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            mean.undefined[i] = defined[i] == 0;
            if (defined[i] > 0) mean.values[i] /= static_cast<double>(defined[i]);
        }
        out[key] = mean;
    }
    return out;
}

}  // namespace geoseg::evaluation

#endif  // GEOSEG_EVALUATION_METRICS_HPP
