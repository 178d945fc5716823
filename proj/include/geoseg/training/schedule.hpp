#ifndef GEOSEG_TRAINING_SCHEDULE_HPP
#define GEOSEG_TRAINING_SCHEDULE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "geoseg/core/error.hpp"

namespace geoseg::training {

enum class ScheduleKind { Triangular, OneCycle, Constant };

inline std::string_view to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Triangular: return "triangular";
        case ScheduleKind::OneCycle: return "one-cycle";
        case ScheduleKind::Constant: return "constant";
    }
    return "?";
}

inline ScheduleKind parse_schedule_kind(std::string_view s) {
    if (s == "triangular" || s == "clr") return ScheduleKind::Triangular;
    if (s == "one-cycle" || s == "onecycle") return ScheduleKind::OneCycle;
    if (s == "constant") return ScheduleKind::Constant;
    throw ConfigError("unknown schedule '" + std::string(s) + "'");
}

struct SchedulePolicy {
    ScheduleKind kind = ScheduleKind::Triangular;
    double lr_min = 1e-4;
    double lr_max = 1e-3;
    /// Steps per cycle; 0 means "one epoch" (triangular) or "the whole
    /// phase" (one-cycle) and is resolved by the trainer.
    std::int64_t cycle_length = 0;
    /// One-cycle warm-up fraction.
    double pct_start = 0.25;
    /// Rate used by the constant schedule.
    double lr_constant = 5.5e-4;
    /// Optional (high, low) first-moment decay, cycled inversely to the rate.
    std::optional<std::pair<double, double>> momentum_range;

    void validate() const {
        if (!(lr_min > 0.0 && lr_min <= lr_max)) throw ConfigError("schedule needs 0 < lr_min <= lr_max");
        if (cycle_length != 0 && cycle_length < 2) throw ConfigError("schedule cycle_length must be >= 2");
        if (!(pct_start > 0.0 && pct_start < 1.0)) throw ConfigError("schedule pct_start must lie in (0,1)");
        if (!(lr_constant > 0.0)) throw ConfigError("schedule lr_constant must be positive");
        if (momentum_range) {
            const auto [hi, lo] = *momentum_range;
            if (!(lo > 0.0 && lo <= hi && hi < 1.0)) throw ConfigError("momentum range must satisfy 0 < low <= high < 1");
        }
    }

    SchedulePolicy resolved(std::int64_t steps_per_epoch, std::int64_t phase_steps) const {
        SchedulePolicy p = *this;
        if (p.cycle_length == 0)
            p.cycle_length = std::max<std::int64_t>(2, kind == ScheduleKind::OneCycle ? phase_steps : steps_per_epoch);
        return p;
    }
};

namespace detail {

inline double lerp(double a, double b, double t) { return a * (1.0 - t) + b * t; }

/// Fraction of the current cycle elapsed at `step`, in [0, 1).
inline double cycle_fraction(const SchedulePolicy& pol, std::int64_t step) {
    if (pol.cycle_length < 2) throw ConfigError("schedule cycle_length must be >= 2");
    if (step < 0) throw ConfigError("schedule step must be >= 0");
    return static_cast<double>(step % pol.cycle_length) / static_cast<double>(pol.cycle_length);
}

}  // namespace detail

/// Learning rate at optimizer step `step` (0-based).
///
/// triangular: lr_min -> lr_max over the first half cycle, back over the
///   second, repeating.
/// one-cycle: linear lr_min -> lr_max over pct_start of the cycle, cosine
///   anneal to lr_min / 10 over the rest, then held at lr_min / 10.
/// constant: lr_constant.
inline double schedule_lr(const SchedulePolicy& pol, std::int64_t step) {
    switch (pol.kind) {
        case ScheduleKind::Constant: return pol.lr_constant;
        case ScheduleKind::Triangular: {
            const double f = detail::cycle_fraction(pol, step);
            const double t = f <= 0.5 ? 2.0 * f : 2.0 - 2.0 * f;
            return detail::lerp(pol.lr_min, pol.lr_max, t);
        }
        case ScheduleKind::OneCycle: {
            if (step < 0) throw ConfigError("schedule step must be >= 0");
            const double floor = pol.lr_min / 10.0;
            if (step >= pol.cycle_length) return floor;
            const double f = static_cast<double>(step) / static_cast<double>(pol.cycle_length);
            if (f < pol.pct_start) return detail::lerp(pol.lr_min, pol.lr_max, f / pol.pct_start);
            const double t = (f - pol.pct_start) / (1.0 - pol.pct_start);
            return floor + (pol.lr_max - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
        }
    }
    return pol.lr_min;
}

/// First-moment decay at `step`: high when the rate is low and vice versa.
/// Without a momentum range this is `fixed`.
inline double schedule_momentum(const SchedulePolicy& pol, std::int64_t step, double fixed) {
    if (!pol.momentum_range || pol.kind == ScheduleKind::Constant) return fixed;
    const auto [hi, lo] = *pol.momentum_range;
    const double lr = schedule_lr(pol, step);
    const double top = pol.lr_max;
    const double bottom = pol.kind == ScheduleKind::OneCycle ? pol.lr_min / 10.0 : pol.lr_min;
    const double t = top > bottom ? std::clamp((lr - bottom) / (top - bottom), 0.0, 1.0) : 0.0;
    return detail::lerp(hi, lo, t);
}

}  // namespace geoseg::training

#endif  // GEOSEG_TRAINING_SCHEDULE_HPP
