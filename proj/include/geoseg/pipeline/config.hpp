#ifndef GEOSEG_PIPELINE_CONFIG_HPP
#define GEOSEG_PIPELINE_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/core/format.hpp"
#include "geoseg/curation/curation.hpp"
#include "geoseg/evaluation/metrics.hpp"
#include "geoseg/features/composite.hpp"
#include "geoseg/features/mbi.hpp"
#include "geoseg/network/model.hpp"
#include "geoseg/training/trainer.hpp"

namespace geoseg::pipeline {

/// Flat "section.key" -> raw value text, read from a small TOML subset:
/// [section] headers, key = value lines, '#' comments, quoted or bare
/// strings, numbers, booleans and one-line [a, b, c] arrays.
using ConfigTable = std::map<std::string, std::string>;

inline ConfigTable parse_config_text(const std::string& text, const std::string& name = "<config>") {
    ConfigTable table;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto fail = [&](const std::string& why) {
            return ConfigError(name + ":" + std::to_string(lineno) + ": " + why);
        };
        std::string_view v = line;
        // strip a trailing comment that is not inside quotes
        bool quoted = false;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] == '"') quoted = !quoted;
            if (v[i] == '#' && !quoted) {
                v = v.substr(0, i);
                break;
            }
        }
        v = trim(v);
        if (v.empty()) continue;
        if (v.front() == '[') {
            if (v.back() != ']') throw fail("unterminated section header");
            section = std::string(trim(v.substr(1, v.size() - 2)));
            if (section.empty()) throw fail("empty section name");
            continue;
        }
        const auto eq = v.find('=');
        if (eq == std::string_view::npos) throw fail("expected key = value");
        const std::string key(trim(v.substr(0, eq)));
        std::string value(trim(v.substr(eq + 1)));
        if (key.empty()) throw fail("empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.count(full)) throw fail("duplicate key '" + full + "'");
        table[full] = value;
    }
    return table;
}

inline ConfigTable read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

/// Every stage's settings with their module defaults.
struct PipelineConfig {
    std::uint64_t seed = 0;
    curation::CurationConfig curation;
    features::MbiParams mbi;
    features::CompositeKind composite = features::CompositeKind::CB0;
    network::ModelConfig model;  // height/width follow curation.tile_size
    training::TrainPolicy train;
    training::SchedulePolicy schedule;
    training::LossConfig loss;
    double threshold = 0.5;
    evaluation::AggregateMode aggregate = evaluation::AggregateMode::MeanOfMetrics;
    bool equalize = false;
    /// Epochs of the conventional constant-rate run in `ablate`; 0 means
    /// frozen_epochs + unfrozen_epochs.
    int conventional_epochs = 0;

    /// Propagate the seed and tile size into the stage configs.
    void sync() {
        curation.seed = seed;
        train.seed = seed;
        model.seed = seed;
        model.height = model.width = static_cast<int>(curation.tile_size);
    }

    void validate() const {
        curation.validate();
        mbi.validate();
        train.validate();
        schedule.validate();
        loss.validate();
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("evaluate.threshold must lie in (0,1)");
        if (conventional_epochs < 0) throw ConfigError("ablate.conventional_epochs must be >= 0");
    }

    /// Cross-field checks for stages that build a network.
    void validate_for_training() const {
        validate();
        if (curation.tile_size % 32 != 0 || curation.tile_size < 32)
            throw ConfigError("curation.tile_size must be >= 32 and divisible by 32 for training");
        model.validate();
    }
};

namespace detail {

inline std::vector<std::string_view> parse_array(std::string_view v, const std::string& key) {
    v = trim(v);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw ConfigError(key + ": expected [a, b, ...]");
    v = trim(v.substr(1, v.size() - 2));
    std::vector<std::string_view> out;
    if (v.empty()) return out;
    for (auto item : split_view(v, ',')) out.push_back(trim(item));
    return out;
}

inline bool parse_bool(std::string_view v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key + ": expected true or false");
}

template <typename Int>
Int parse_nonneg(std::string_view v, const std::string& key) {
    const auto x = parse_int<long long>(v, key);
    if (x < 0) throw ConfigError(key + " must be >= 0");
    return static_cast<Int>(x);
}

}  // namespace detail

/// Apply one "section.key" = value setting. Unknown keys are errors.
inline void apply_setting(PipelineConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_nonneg;
    const std::string_view v = value;
    if (key == "seed") c.seed = parse_nonneg<std::uint64_t>(v, key);
    else if (key == "curation.tile_size") c.curation.tile_size = parse_nonneg<std::size_t>(v, key);
    else if (key == "curation.hlf_threshold") c.curation.hlf_threshold = parse_double(v, key);
    else if (key == "curation.split_ratio") c.curation.split_ratio = parse_double(v, key);
    else if (key == "mbi.directions") {
        c.mbi.directions.clear();
        for (auto item : detail::parse_array(v, key)) c.mbi.directions.push_back(parse_double(item, key));
    } else if (key == "mbi.s_min") c.mbi.s_min = parse_nonneg<std::size_t>(v, key);
    else if (key == "mbi.s_max") c.mbi.s_max = parse_nonneg<std::size_t>(v, key);
    else if (key == "mbi.delta_s") c.mbi.delta_s = parse_nonneg<std::size_t>(v, key);
    else if (key == "mbi.n_bands") c.mbi.n_bands = parse_nonneg<std::size_t>(v, key);
    else if (key == "features.composite") c.composite = features::parse_composite(v);
    else if (key == "model.encoder_widths" || key == "model.encoder_blocks") {
        const auto items = detail::parse_array(v, key);
        const std::size_t want = key == "model.encoder_widths" ? 5 : 4;
        if (items.size() != want) throw ConfigError(key + ": expected " + std::to_string(want) + " values");
        for (std::size_t i = 0; i < want; ++i) {
            const int x = parse_int<int>(items[i], key);
            if (want == 5) c.model.encoder_widths[i] = x;
            else c.model.encoder_blocks[i] = x;
        }
    } else if (key == "model.pretrained") c.model.pretrained_path = value;
    else if (key == "train.frozen_epochs") c.train.frozen_epochs = parse_int<int>(v, key);
    else if (key == "train.unfrozen_epochs") c.train.unfrozen_epochs = parse_int<int>(v, key);
    else if (key == "train.batch_size") c.train.batch_size = parse_int<int>(v, key);
    else if (key == "train.steps_per_epoch") c.train.steps_per_epoch = parse_int<int>(v, key);
    else if (key == "train.fallback") c.train.fallback = detail::parse_bool(v, key);
    else if (key == "train.beta1") c.train.adam.beta1 = parse_double(v, key);
    else if (key == "train.beta2") c.train.adam.beta2 = parse_double(v, key);
    else if (key == "train.adam_eps") c.train.adam.eps = parse_double(v, key);
    else if (key == "train.loss") c.train.loss = training::parse_loss_kind(v);
    else if (key == "schedule.kind") c.schedule.kind = training::parse_schedule_kind(v);
    else if (key == "schedule.lr_min") c.schedule.lr_min = parse_double(v, key);
    else if (key == "schedule.lr_max") c.schedule.lr_max = parse_double(v, key);
    else if (key == "schedule.cycle_length") c.schedule.cycle_length = parse_nonneg<std::int64_t>(v, key);
    else if (key == "schedule.pct_start") c.schedule.pct_start = parse_double(v, key);
    else if (key == "schedule.lr_constant") c.schedule.lr_constant = parse_double(v, key);
    else if (key == "schedule.momentum") {
        const auto items = detail::parse_array(v, key);
        if (items.empty()) c.schedule.momentum_range.reset();
        else if (items.size() == 2) c.schedule.momentum_range = {parse_double(items[0], key), parse_double(items[1], key)};
        else throw ConfigError(key + ": expected [high, low] or []");
    } else if (key == "loss.alpha") c.loss.alpha = parse_double(v, key);
    else if (key == "loss.epsilon") c.loss.epsilon = parse_double(v, key);
    else if (key == "evaluate.threshold") c.threshold = parse_double(v, key);
    else if (key == "evaluate.aggregate") {
        if (v == "mean") c.aggregate = evaluation::AggregateMode::MeanOfMetrics;
        else if (v == "pooled") c.aggregate = evaluation::AggregateMode::PooledCounts;
        else throw ConfigError(key + ": expected mean or pooled");
    } else if (key == "predict.equalize") c.equalize = detail::parse_bool(v, key);
    else if (key == "ablate.conventional_epochs") c.conventional_epochs = parse_int<int>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
}

inline PipelineConfig make_config(const ConfigTable& table) {
    PipelineConfig c;
    for (const auto& [k, v] : table) apply_setting(c, k, v);
    c.sync();
    return c;
}

/// Parse "section.key=value" overrides given on the command line.
inline void apply_override(PipelineConfig& c, std::string_view kv) {
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(kv) + "' is not key=value");
    apply_setting(c, std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
}

}  // namespace geoseg::pipeline

#endif  // GEOSEG_PIPELINE_CONFIG_HPP
