#ifndef GEOSEG_PIPELINE_COMMANDS_HPP
#define GEOSEG_PIPELINE_COMMANDS_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geoseg/core/error.hpp"
#include "geoseg/core/format.hpp"
#include "geoseg/curation/curation.hpp"
#include "geoseg/curation/manifest.hpp"
#include "geoseg/evaluation/metrics.hpp"
#include "geoseg/features/composite.hpp"
#include "geoseg/features/equalize.hpp"
#include "geoseg/network/model.hpp"
#include "geoseg/pipeline/config.hpp"
#include "geoseg/raster/io.hpp"
#include "geoseg/training/trainer.hpp"

namespace geoseg::pipeline {

namespace fs = std::filesystem;

namespace detail {

inline bool is_raster(const fs::path& p) {
    const auto ext = geoseg::detail::lower_extension(p);
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

/// Raster files of a directory, sorted by file name.
inline std::vector<fs::path> list_rasters(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_raster(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::map<std::string, std::string> read_tsv_map(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read '" + path.string() + "'");
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto parts = split_view(t, '\t');
        if (parts.size() != 2) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected id<TAB>value");
        out[std::string(trim(parts[0]))] = std::string(trim(parts[1]));
    }
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
}

inline std::string generic(const fs::path& p) { return p.generic_string(); }

}  // namespace detail

// ---- curate ----

struct CurateReport {
    std::size_t chips = 0;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::size_t train = 0;
    std::size_t val = 0;
    fs::path manifest;
};

/// Input layout: <input>/images/<id>.{png,tif,tiff} with a same-named
/// single-band mask under <input>/masks/, and an optional <input>/gsd.tsv
/// of "id<TAB>metres" lines (default 1.0). Writes chips to
/// <out>/tiles and <out>/masks and the manifest to <out>/manifest.tsv.
inline CurateReport cmd_curate(const fs::path& input_dir, const fs::path& out_dir, PipelineConfig cfg) {
    cfg.sync();
    cfg.validate();
    const auto images = detail::list_rasters(input_dir / "images");
    if (images.empty()) throw DataError("no images under '" + (input_dir / "images").string() + "'");
    std::map<std::string, std::string> gsd_map;
    if (fs::exists(input_dir / "gsd.tsv")) gsd_map = detail::read_tsv_map(input_dir / "gsd.tsv");

    struct Chip {
        curation::TilePair pair;
        std::string name;
    };
    std::vector<Chip> kept;
    CurateReport report;
    for (const auto& img_path : images) {
        const std::string id = img_path.stem().string();
        fs::path mask_path;
        for (const char* ext : {".png", ".tif", ".tiff"})
            if (fs::exists(input_dir / "masks" / (id + ext))) {
                mask_path = input_dir / "masks" / (id + ext);
                break;
            }
        if (mask_path.empty()) throw DataError("image '" + id + "' has no mask under masks/");
        Tile image = load_tile(img_path, 3);
        if (auto it = gsd_map.find(id); it != gsd_map.end()) {
            image.gsd = parse_double(it->second, "gsd of '" + id + "'");
            if (!(image.gsd > 0.0)) throw DataError("gsd of '" + id + "' must be positive");
        }
        const MaskTile mask = load_mask(mask_path);
        auto chips = curation::chip(image, mask, cfg.curation.tile_size);
        report.chips += chips.size();
        for (auto& c : chips) {
            if (curation::hlf(c.mask) < cfg.curation.hlf_threshold) continue;
            const std::string name = id + "_r" + std::to_string(c.image.origin.row) + "_c" + std::to_string(c.image.origin.col);
            kept.push_back({std::move(c), name});
        }
    }
    report.kept = kept.size();
    report.dropped = report.chips - report.kept;
    if (kept.empty()) throw DataError("no tiles passed the HLF filter");

    const auto is_train = curation::split_assignment(kept.size(), cfg.curation.split_ratio, cfg.seed);
    curation::Manifest manifest;
    manifest.seed = cfg.seed;
    manifest.annotations["tile_size"] = std::to_string(cfg.curation.tile_size);
    manifest.annotations["hlf_threshold"] = format_double(cfg.curation.hlf_threshold);
    manifest.annotations["split_ratio"] = format_double(cfg.curation.split_ratio);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const auto& c = kept[i];
        const fs::path tile_rel = fs::path("tiles") / (c.name + ".png");
        const fs::path mask_rel = fs::path("masks") / (c.name + ".png");
        save_raster(c.pair.image, out_dir / tile_rel);
        save_mask(c.pair.mask, out_dir / mask_rel);
        manifest.entries.push_back({detail::generic(tile_rel), detail::generic(mask_rel), c.pair.image.gsd,
                                    c.pair.image.source_id, is_train[i] ? curation::Split::Train : curation::Split::Val,
                                    {}});
        (is_train[i] ? report.train : report.val) += 1;
    }
    report.manifest = out_dir / "manifest.tsv";
    curation::write_manifest(manifest, report.manifest);
    return report;
}

// ---- featurize ----

inline fs::path composite_path_for(const fs::path& tile_path, features::CompositeKind kind) {
    return tile_path.parent_path() /
           (tile_path.stem().string() + "_" + std::string(features::to_string(kind)) + tile_path.extension().string());
}

/// Write each entry's composite next to its tile (suffix _cb0/_cb1/_cb2)
/// and rewrite the manifest with the composite column filled. Derived
/// bands are normalised per image.
inline curation::Manifest cmd_featurize(const fs::path& manifest_path, PipelineConfig cfg) {
    cfg.sync();
    cfg.validate();
    curation::Manifest m = curation::read_manifest(manifest_path);
    for (auto& e : m.entries) {
        const fs::path tile_rel(e.tile_path);
        const fs::path out_rel = composite_path_for(tile_rel, cfg.composite);
        const fs::path src = curation::resolve_entry_path(manifest_path, e.tile_path);
        const fs::path dst = curation::resolve_entry_path(manifest_path, detail::generic(out_rel));
        if (cfg.composite == features::CompositeKind::CB0) {
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
        } else {
            const Tile rgb = load_tile(src, 3);
            save_raster(features::make_composite(rgb, cfg.composite, cfg.mbi), dst);
        }
        e.composite_path = detail::generic(out_rel);
    }
    m.annotations["composite"] = std::string(features::to_string(cfg.composite));
    m.annotations["normalization"] = "per-image";
    curation::write_manifest(m, manifest_path);
    return m;
}

// ---- train ----

/// Image/mask pairs of one split; the composite is used when present.
inline std::vector<curation::TilePair> load_split(const fs::path& manifest_path, const curation::Manifest& m,
                                                  curation::Split split) {
    std::vector<curation::TilePair> out;
    for (const auto& e : m.with_split(split)) {
        const std::string& img = e.composite_path.empty() ? e.tile_path : e.composite_path;
        Tile tile = load_tile(curation::resolve_entry_path(manifest_path, img), 3);
        tile.gsd = e.gsd;
        tile.source_id = fs::path(e.tile_path).stem().string();
        MaskTile mask = load_mask(curation::resolve_entry_path(manifest_path, e.mask_path));
        if (mask.height() != tile.height() || mask.width() != tile.width())
            throw DataError("entry '" + e.tile_path + "': mask and tile sizes differ");
        out.push_back({std::move(tile), std::move(mask)});
    }
    return out;
}

struct TrainOutput {
    training::TrainResult result;
    fs::path checkpoint;
    fs::path history;
};

/// Train on the manifest's train split, validating on its val split.
/// Writes <out>/model.gst and <out>/history.csv.
inline TrainOutput cmd_train(const fs::path& manifest_path, const fs::path& out_dir, PipelineConfig cfg) {
    cfg.sync();
    cfg.validate_for_training();
    const curation::Manifest m = curation::read_manifest(manifest_path);
    const auto train = load_split(manifest_path, m, curation::Split::Train);
    const auto val = load_split(manifest_path, m, curation::Split::Val);
    if (train.empty()) throw DataError("manifest has no train entries");
    if (val.empty()) throw DataError("manifest has no val entries");

    auto model = network::build_model(cfg.model);
    training::Trainer trainer(*model, cfg.train, cfg.schedule, cfg.loss);
    TrainOutput out;
    out.result = trainer.fit(train, val);
    out.checkpoint = out_dir / "model.gst";
    out.history = out_dir / "history.csv";
    nlohmann::json meta = {{"epoch", out.result.best_epoch},
                           {"best_val_loss", out.result.best_val_loss},
                           {"prng", std::string(Rng::kAlgorithm)},
                           {"prng_state", out.result.rng_state},
                           {"seed", cfg.seed},
                           {"composite", m.annotations.count("composite") ? m.annotations.at("composite") : "cb0"}};
    network::save_checkpoint(*model, out.checkpoint, meta);
    training::write_history(out.result.history, out.history);
    return out;
}

// ---- predict ----

struct PredictOutput {
    std::vector<fs::path> probabilities;
    std::vector<fs::path> masks;
};

inline std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
    std::vector<fs::path> out;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            for (auto& f : detail::list_rasters(p)) out.push_back(f);
        } else if (fs::exists(p)) {
            out.push_back(p);
        } else {
            throw DataError("input '" + p.string() + "' does not exist");
        }
    }
    if (out.empty()) throw DataError("no input tiles");
    return out;
}

/// Output id of a tile file: its stem without a composite suffix, so
/// predictions on <id>_cb1.png pair with the mask <id>.png.
inline std::string prediction_id(const fs::path& tile_path) {
    std::string stem = tile_path.stem().string();
    for (auto k : {features::CompositeKind::CB0, features::CompositeKind::CB1, features::CompositeKind::CB2}) {
        const std::string suffix = "_" + std::string(features::to_string(k));
        if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
            stem.resize(stem.size() - suffix.size());
            break;
        }
    }
    return stem;
}

/// For each tile writes <out>/<id>_prob.png (probability x 255) and
/// <out>/<id>_mask.png (binarised at cfg.threshold).
inline PredictOutput cmd_predict(const fs::path& checkpoint, const std::vector<fs::path>& inputs,
                                 const fs::path& out_dir, PipelineConfig cfg) {
    cfg.validate();
    auto model = network::load_checkpoint(checkpoint);
    const auto files = expand_inputs(inputs);
    PredictOutput out;
    constexpr std::size_t kBatch = 8;
    for (std::size_t start = 0; start < files.size(); start += kBatch) {
        std::vector<Tile> tiles;
        for (std::size_t i = start; i < std::min(files.size(), start + kBatch); ++i) {
            Tile t = load_tile(files[i], 3);
            if (static_cast<int>(t.height()) != model->config().height ||
                static_cast<int>(t.width()) != model->config().width)
                throw DataError("tile '" + files[i].string() + "' does not match the model input size");
            tiles.push_back(cfg.equalize ? features::hist_equalize(t) : std::move(t));
        }
        std::vector<const Tile*> ptrs;
        for (const auto& t : tiles) ptrs.push_back(&t);
        const nn::Tensor logits = model->forward(network::to_input(ptrs));
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            const ProbMap p = network::probability_map(logits, static_cast<int>(i));
            const std::string stem = prediction_id(files[start + i]);
            const fs::path prob_path = out_dir / (stem + "_prob.png");
            const fs::path mask_path = out_dir / (stem + "_mask.png");
            save_raster(Band(p.data(), kUnitRange, "P"), prob_path);
            save_mask(evaluation::binarize(p, cfg.threshold), mask_path);
            out.probabilities.push_back(prob_path);
            out.masks.push_back(mask_path);
        }
    }
    return out;
}

// ---- evaluate ----

inline constexpr const char* kMetricsHeader = "id,group,tp,tn,fp,fn,accuracy,precision,recall,f1,bf,mf,iou";

inline std::string metrics_row(const std::string& id, const std::string& group, const evaluation::ConfusionCounts& c,
                               const evaluation::MetricReport& r) {
    std::string s = id + "," + group + "," + std::to_string(c.tp) + "," + std::to_string(c.tn) + "," +
                    std::to_string(c.fp) + "," + std::to_string(c.fn);
    for (std::size_t i = 0; i < evaluation::kMetricCount; ++i)
        s += "," + (r.undefined[i] ? std::string("nan") : format_double(r.values[i]));
    return s + "\n";
}

struct EvaluateOutput {
    std::vector<std::pair<std::string, evaluation::ConfusionCounts>> per_image;  // (id, counts)
    std::map<std::string, std::string> groups;                                  // id -> group
    std::map<std::string, evaluation::MetricReport> group_reports;
    fs::path metrics_csv;
    fs::path groups_csv;
};

/// Match predictions to ground truth by id: a ground-truth file <id>.ext
/// pairs with <id>_mask.ext or <id>.ext in the prediction directory.
/// Writes <out>/metrics.csv (one row per image), <out>/groups.csv (one
/// row per group, pooled counts with metrics per cfg.aggregate) and
/// confusion maps <out>/maps/<id>_confusion.png. The optional group map
/// is a TSV of "id<TAB>group"; unlisted ids fall in group "all".
inline EvaluateOutput cmd_evaluate(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& group_map,
                                   const fs::path& out_dir, PipelineConfig cfg) {
    cfg.validate();
    std::map<std::string, fs::path> gt, pred;
    for (const auto& p : detail::list_rasters(gt_dir)) gt[p.stem().string()] = p;
    for (const auto& p : detail::list_rasters(pred_dir)) {
        std::string id = p.stem().string();
        if (id.size() > 5 && id.ends_with("_mask")) id.resize(id.size() - 5);
        else if (id.ends_with("_prob")) continue;
        pred[id] = p;
    }
    std::vector<std::string> unmatched;
    for (const auto& [id, _] : gt)
        if (!pred.count(id)) unmatched.push_back(id + " (no prediction)");
    for (const auto& [id, _] : pred)
        if (!gt.count(id)) unmatched.push_back(id + " (no ground truth)");
    if (!unmatched.empty()) {
        std::string msg = "unmatched ids:";
        for (const auto& u : unmatched) msg += " " + u;
        throw DataError(msg);
    }
    if (gt.empty()) throw DataError("no masks to evaluate");

    std::map<std::string, std::string> group_of;
    if (!group_map.empty()) group_of = detail::read_tsv_map(group_map);

    EvaluateOutput out;
    std::string csv = std::string(kMetricsHeader) + "\n";
    std::vector<std::pair<std::string, evaluation::ConfusionCounts>> grouped;
    for (const auto& [id, gt_path] : gt) {
        const MaskTile g = load_mask(gt_path);
        const MaskTile p = load_mask(pred.at(id));
        if (g.height() != p.height() || g.width() != p.width())
            throw DataError("'" + id + "': prediction and ground truth sizes differ");
        const auto counts = evaluation::confusion(p, g);
        const std::string group = group_of.count(id) ? group_of.at(id) : "all";
        out.per_image.emplace_back(id, counts);
        out.groups[id] = group;
        grouped.emplace_back(group, counts);
        csv += metrics_row(id, group, counts, evaluation::metrics(counts));
        save_raster(evaluation::confusion_map(p, g), out_dir / "maps" / (id + "_confusion.png"));
    }
    out.group_reports = evaluation::aggregate(grouped, cfg.aggregate);
    std::map<std::string, evaluation::ConfusionCounts> pooled;
    for (const auto& [g, c] : grouped) pooled[g] += c;
    const std::string mode = cfg.aggregate == evaluation::AggregateMode::MeanOfMetrics ? "mean" : "pooled";
    std::string gcsv = std::string(kMetricsHeader) + "\n";
    for (const auto& [g, r] : out.group_reports) gcsv += metrics_row(mode, g, pooled.at(g), r);

    out.metrics_csv = out_dir / "metrics.csv";
    out.groups_csv = out_dir / "groups.csv";
    detail::write_text(out.metrics_csv, csv);
    detail::write_text(out.groups_csv, gcsv);
    return out;
}

// ---- ablate ----

struct LossAblationRow {
    training::LossKind loss;
    training::TrainResult result;
    training::SetScore train_score;
    training::SetScore val_score;
    training::SetScore focus_score;  // the focus subset, or the val set
};

/// Train one model per loss (combo, bce, dice) from the same
/// initialisation and score them on train, val and a focus subset.
inline std::vector<LossAblationRow> run_loss_ablation(const std::vector<curation::TilePair>& train,
                                                      const std::vector<curation::TilePair>& val,
                                                      const std::vector<curation::TilePair>& focus,
                                                      const PipelineConfig& cfg) {
    std::vector<LossAblationRow> rows;
    for (auto kind : {training::LossKind::Combo, training::LossKind::Bce, training::LossKind::Dice}) {
        auto model = network::build_model(cfg.model);
        training::TrainPolicy pol = cfg.train;
        pol.loss = kind;
        training::Trainer trainer(*model, pol, cfg.schedule, cfg.loss);
        LossAblationRow row{kind, trainer.fit(train, val), {}, {}, {}};
        row.train_score = training::score_set(*model, train, cfg.loss);
        row.val_score = training::score_set(*model, val, cfg.loss);
        row.focus_score = training::score_set(*model, focus.empty() ? val : focus, cfg.loss);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string loss_ablation_csv(const std::vector<LossAblationRow>& rows) {
    std::string s = "loss,train_iou,val_loss,val_iou,focus_iou,best_epoch\n";
    for (const auto& r : rows)
        s += std::string(training::to_string(r.loss)) + "," + format_double(r.train_score.iou()) + "," +
             format_double(r.val_score.loss) + "," + format_double(r.val_score.iou()) + "," +
             format_double(r.focus_score.iou()) + "," + std::to_string(r.result.best_epoch) + "\n";
    return s;
}

struct PolicyAblation {
    training::TrainResult proposed;
    training::TrainResult conventional;
    int conventional_epochs = 0;
    double conventional_final_loss = 0.0;
    int proposed_epochs_to_reach = 0;  // 0: never reached
};

/// Proposed policy (cfg.train phases with cfg.schedule) against the
/// conventional one: every group trainable from the start, constant
/// rate schedule.lr_constant, conventional_epochs epochs. Both start from
/// the same initialisation. The conventional final loss is the
/// validation loss of its returned (best) model.
inline PolicyAblation run_policy_ablation(const std::vector<curation::TilePair>& train,
                                          const std::vector<curation::TilePair>& val, const PipelineConfig& cfg) {
    PolicyAblation out;
    {
        auto model = network::build_model(cfg.model);
        training::Trainer trainer(*model, cfg.train, cfg.schedule, cfg.loss);
        out.proposed = trainer.fit(train, val);
    }
    {
        auto model = network::build_model(cfg.model);
        training::TrainPolicy pol = cfg.train;
        pol.frozen_epochs = 0;
        pol.unfrozen_epochs =
            cfg.conventional_epochs > 0 ? cfg.conventional_epochs : cfg.train.frozen_epochs + cfg.train.unfrozen_epochs;
        training::SchedulePolicy sch = cfg.schedule;
        sch.kind = training::ScheduleKind::Constant;
        sch.momentum_range.reset();
        training::Trainer trainer(*model, pol, sch, cfg.loss);
        out.conventional = trainer.fit(train, val);
        out.conventional_epochs = pol.unfrozen_epochs;
    }
    out.conventional_final_loss = out.conventional.best_val_loss;
    for (const auto& r : out.proposed.history)
        if (r.val_loss <= out.conventional_final_loss) {
            out.proposed_epochs_to_reach = r.epoch;
            break;
        }
    return out;
}

inline std::string policy_ablation_csv(const PolicyAblation& a) {
    std::string s = "policy,epoch,phase,train_loss,val_loss,val_iou,lr_first,lr_last,fellback\n";
    for (const auto& [name, res] : {std::pair{"proposed", &a.proposed}, std::pair{"conventional", &a.conventional}})
        for (const auto& r : res->history)
            s += std::string(name) + "," + std::to_string(r.epoch) + "," + r.phase + "," + format_double(r.train_loss) +
                 "," + format_double(r.val_loss) + "," + format_double(r.val_iou) + "," + format_double(r.lr_first) +
                 "," + format_double(r.lr_last) + "," + (r.fellback ? "1" : "0") + "\n";
    return s;
}

inline std::string policy_summary_csv(const PolicyAblation& a) {
    return "conventional_epochs,conventional_final_loss,proposed_epochs_to_reach\n" +
           std::to_string(a.conventional_epochs) + "," + format_double(a.conventional_final_loss) + "," +
           std::to_string(a.proposed_epochs_to_reach) + "\n";
}

struct AblateOutput {
    std::vector<LossAblationRow> losses;
    PolicyAblation policy;
};

/// Both ablations on a manifest's train/val splits. `focus_ids` names
/// tiles (by file stem) scored separately in the loss comparison.
/// Writes loss_ablation.csv, policy_ablation.csv and policy_summary.csv.
inline AblateOutput cmd_ablate(const fs::path& manifest_path, const std::vector<std::string>& focus_ids,
                               const fs::path& out_dir, PipelineConfig cfg) {
    cfg.sync();
    cfg.validate_for_training();
    const curation::Manifest m = curation::read_manifest(manifest_path);
    const auto train = load_split(manifest_path, m, curation::Split::Train);
    const auto val = load_split(manifest_path, m, curation::Split::Val);
    if (train.empty() || val.empty()) throw DataError("ablation needs train and val entries");
    std::vector<curation::TilePair> focus;
    for (const auto& id : focus_ids) {
        bool found = false;
        for (const auto* set : {&train, &val})
            for (const auto& p : *set)
                if (p.image.source_id == id && !found) {
                    focus.push_back(p);
                    found = true;
                }
        if (!found) throw DataError("focus id '" + id + "' is not in the manifest");
    }
    AblateOutput out;
    out.losses = run_loss_ablation(train, val, focus, cfg);
    out.policy = run_policy_ablation(train, val, cfg);
    detail::write_text(out_dir / "loss_ablation.csv", loss_ablation_csv(out.losses));
    detail::write_text(out_dir / "policy_ablation.csv", policy_ablation_csv(out.policy));
    detail::write_text(out_dir / "policy_summary.csv", policy_summary_csv(out.policy));
    return out;
}

}  // namespace geoseg::pipeline

#endif  // GEOSEG_PIPELINE_COMMANDS_HPP
