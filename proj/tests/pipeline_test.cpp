#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "geoseg/geoseg.hpp"
#include "oracles/oracles.hpp"

namespace fs = std::filesystem;
using namespace geoseg;
using namespace geoseg::pipeline;

namespace {

fs::path fresh(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "geoseg_pipeline_test" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// 448x448 scene whose four 224 tiles have the given building fractions
/// (top rows of each tile are built).
void write_scene(const fs::path& input, const std::string& id, std::array<double, 4> fractions) {
    Rng rng(1);
    const Tile img = oracle::random_tile(rng, 448, 448);
    MaskTile m(448, 448);
    for (int t = 0; t < 4; ++t) {
        const std::size_t r0 = (t / 2) * 224, c0 = (t % 2) * 224;
        const auto rows = static_cast<std::size_t>(fractions[t] * 224);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < 224; ++c) m.set(r0 + r, c0 + c, true);
    }
    save_raster(img, input / "images" / (id + ".png"));
    save_mask(m, input / "masks" / (id + ".png"));
}

PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.seed = 3;
    cfg.curation.tile_size = 32;
    cfg.model.encoder_widths = {8, 8, 16, 16, 32};
    cfg.model.encoder_blocks = {1, 1, 1, 1};
    cfg.train.frozen_epochs = 1;
    cfg.train.unfrozen_epochs = 1;
    cfg.train.steps_per_epoch = 2;
    cfg.train.batch_size = 2;
    cfg.mbi.s_max = 22;
    cfg.sync();
    return cfg;
}

/// Probe tiles written as a curated dataset of 32x32 chips.
fs::path probe_dataset(const std::string& name, std::size_t size, std::size_t count) {
    const fs::path input = fresh(name + "_in");
    ProbeSpec spec;
    spec.size = size;
    spec.count = count;
    const auto probe = make_probe_set(spec);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        save_raster(probe[i].image, input / "images" / ("p" + std::to_string(i) + ".png"));
        save_mask(probe[i].mask, input / "masks" / ("p" + std::to_string(i) + ".png"));
    }
    return input;
}

}  // namespace

TEST(Config, ParseSectionsArraysAndComments) {
    const auto table = parse_config_text(R"(seed = 7
# comment
[curation]
tile_size = 64   # trailing comment
hlf_threshold = 0.25
[model]
encoder_widths = [16, 16, 32, 64, 128]
pretrained = "enc # not a comment.gst"
[schedule]
kind = one-cycle
momentum = [0.95, 0.85]
[train]
fallback = false
)");
    const auto cfg = make_config(table);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.curation.tile_size, 64u);
    EXPECT_EQ(cfg.curation.seed, 7u);
    EXPECT_EQ(cfg.model.height, 64);
    EXPECT_DOUBLE_EQ(cfg.curation.hlf_threshold, 0.25);
    EXPECT_EQ(cfg.model.encoder_widths[4], 128);
    EXPECT_EQ(cfg.model.pretrained_path, "enc # not a comment.gst");
    EXPECT_EQ(cfg.schedule.kind, training::ScheduleKind::OneCycle);
    EXPECT_TRUE(cfg.schedule.momentum_range.has_value());
    EXPECT_FALSE(cfg.train.fallback);
}

TEST(Config, Errors) {
    EXPECT_THROW(make_config(parse_config_text("[train]\nbogus = 1\n")), ConfigError);
    EXPECT_THROW(parse_config_text("a = 1\na = 2\n"), ConfigError);
    EXPECT_THROW(parse_config_text("[broken\n"), ConfigError);
    EXPECT_THROW(parse_config_text("novalue\n"), ConfigError);
    EXPECT_THROW(make_config(parse_config_text("[train]\nbatch_size = many\n")), ConfigError);
    EXPECT_THROW(make_config(parse_config_text("[model]\nencoder_blocks = [1, 2]\n")), ConfigError);
    PipelineConfig c;
    EXPECT_THROW(apply_override(c, "train.loss"), ConfigError);
    apply_override(c, "train.loss=dice");
    EXPECT_EQ(c.train.loss, training::LossKind::Dice);
    c.curation.tile_size = 100;
    c.sync();
    EXPECT_NO_THROW(c.validate());
    EXPECT_THROW(c.validate_for_training(), ConfigError);
    try {
        make_config(parse_config_text("x = 1\n"));
    } catch (const Error& e) {
        EXPECT_EQ(e.exit_code(), 2);
    }
}

TEST(Curate, HalfBuiltTilesKeptAndDeterministic) {
    const fs::path input = fresh("curate_in");
    write_scene(input, "s", {0.5, 0.5, 0.5, 0.5});
    PipelineConfig cfg;
    cfg.curation.tile_size = 224;
    const auto r = cmd_curate(input, fresh("curate_a"), cfg);
    EXPECT_EQ(r.chips, 4u);
    EXPECT_EQ(r.kept, 4u);
    EXPECT_EQ(r.train + r.val, 4u);
    const auto again = cmd_curate(input, fresh("curate_c"), cfg);
    EXPECT_EQ(slurp(r.manifest), slurp(again.manifest));
    const auto m = curation::read_manifest(r.manifest);
    EXPECT_EQ(m.entries[0].tile_path, "tiles/s_r0_c0.png");
    EXPECT_EQ(m.annotations.at("tile_size"), "224");
}

TEST(Curate, ThresholdOneKeepsFullyBuilt) {
    const fs::path input = fresh("curate_full_in");
    write_scene(input, "s", {1.0, 0.9, 0.5, 1.0});
    PipelineConfig cfg;
    cfg.curation.tile_size = 224;
    cfg.curation.hlf_threshold = 1.0;
    const auto r = cmd_curate(input, fresh("curate_full"), cfg);
    EXPECT_EQ(r.kept, 2u);
    EXPECT_EQ(r.dropped, 2u);
}

TEST(Curate, Errors) {
    const fs::path input = fresh("curate_err_in");
    EXPECT_THROW(cmd_curate(input, fresh("curate_err"), PipelineConfig{}), DataError);
    write_scene(input, "s", {0, 0, 0, 0});
    PipelineConfig cfg;
    cfg.curation.tile_size = 224;
    EXPECT_THROW(cmd_curate(input, fresh("curate_err"), cfg), DataError);  // nothing passes HLF
    fs::remove(input / "masks" / "s.png");
    EXPECT_THROW(cmd_curate(input, fresh("curate_err"), cfg), DataError);
}

TEST(Featurize, Cb0IsByteCopyAndCb1Cb2Written) {
    const fs::path input = probe_dataset("feat", 64, 2);
    auto cfg = small_config();
    cfg.curation.hlf_threshold = 0.0;
    const fs::path out = fresh("feat_out");
    const auto r = cmd_curate(input, out, cfg);
    const auto m0 = cmd_featurize(r.manifest, cfg);
    for (const auto& e : m0.entries) EXPECT_EQ(slurp(out / e.tile_path), slurp(out / e.composite_path));
    EXPECT_EQ(curation::read_manifest(r.manifest).annotations.at("composite"), "cb0");
    for (auto kind : {features::CompositeKind::CB1, features::CompositeKind::CB2}) {
        cfg.composite = kind;
        const auto m = cmd_featurize(r.manifest, cfg);
        for (const auto& e : m.entries) {
            EXPECT_TRUE(e.composite_path.ends_with("_" + std::string(features::to_string(kind)) + ".png"));
            EXPECT_EQ(load_tile(out / e.composite_path).height(), 32u);
        }
    }
}

TEST(Featurize, PureGreenAndConstantTiles) {
    const fs::path out = fresh("feat_const");
    Grid<double> green(32, 32, 255.0);
    green(0, 0) = 200.0;
    save_raster(make_rgb_tile(Grid<double>(32, 32, 0.0), green, Grid<double>(32, 32, 0.0)), out / "tiles" / "g.png");
    save_raster(make_rgb_tile(Grid<double>(32, 32, 90.0), Grid<double>(32, 32, 90.0), Grid<double>(32, 32, 90.0)),
                out / "tiles" / "c.png");
    save_mask(MaskTile(32, 32), out / "masks" / "g.png");
    save_mask(MaskTile(32, 32), out / "masks" / "c.png");
    curation::Manifest m;
    m.entries = {{"tiles/g.png", "masks/g.png", 1.0, "g", curation::Split::Train, ""},
                 {"tiles/c.png", "masks/c.png", 1.0, "c", curation::Split::Val, ""}};
    curation::write_manifest(m, out / "manifest.tsv");
    auto cfg = small_config();
    cfg.composite = features::CompositeKind::CB1;
    cmd_featurize(out / "manifest.tsv", cfg);
    EXPECT_EQ(read_raw(out / "tiles" / "g_cb1.png").at(5, 5, 1), 255);
    cfg.composite = features::CompositeKind::CB2;
    cmd_featurize(out / "manifest.tsv", cfg);
    const RawImage c = read_raw(out / "tiles" / "c_cb2.png");
    EXPECT_EQ(c.at(3, 3, 0), 128);  // 127.5 rounds up
    EXPECT_EQ(c.at(3, 3, 1), 128);
    EXPECT_EQ(c.at(3, 3, 2), 0);

    fs::remove(out / "tiles" / "g.png");
    EXPECT_THROW(cmd_featurize(out / "manifest.tsv", cfg), DataError);
}

TEST(Train, FrozenOnlyLeavesEncoderUnchanged) {
    const fs::path input = probe_dataset("train_frozen", 64, 2);
    auto cfg = small_config();
    cfg.curation.hlf_threshold = 0.0;
    cfg.train.unfrozen_epochs = 0;
    cfg.train.fallback = false;
    const fs::path out = fresh("train_frozen_out");
    const auto r = cmd_curate(input, out / "data", cfg);
    const auto t = cmd_train(r.manifest, out / "run", cfg);
    auto fresh_model = network::build_model(cfg.model);
    auto trained = network::load_checkpoint(t.checkpoint);
    auto a = fresh_model->named_tensors(), b = trained->named_tensors();
    bool head_changed = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].first.rfind("encoder.", 0) == 0) EXPECT_EQ(*a[i].second, *b[i].second) << a[i].first;
        if (a[i].first.rfind("head.", 0) == 0 && *a[i].second != *b[i].second) head_changed = true;
    }
    EXPECT_TRUE(head_changed);
    nlohmann::json meta;
    network::load_checkpoint(t.checkpoint, &meta);
    EXPECT_EQ(meta.at("seed"), 3);
    EXPECT_EQ(meta.at("prng"), "mt19937_64");
    EXPECT_TRUE(meta.contains("prng_state"));
}

TEST(Train, SameSeedSameHistoryAndNumericFailure) {
    const fs::path input = probe_dataset("train_det", 64, 2);
    auto cfg = small_config();
    cfg.curation.hlf_threshold = 0.0;
    const fs::path out = fresh("train_det_out");
    const auto r = cmd_curate(input, out / "data", cfg);
    const auto a = cmd_train(r.manifest, out / "a", cfg);
    const auto b = cmd_train(r.manifest, out / "b", cfg);
    EXPECT_EQ(slurp(a.history), slurp(b.history));
    EXPECT_EQ(slurp(a.checkpoint), slurp(b.checkpoint));

    cfg.schedule.kind = training::ScheduleKind::Constant;
    // weights step by ~lr under Adam; 1e38 overflows float within an epoch
    cfg.schedule.lr_constant = 1e38;
    try {
        cmd_train(r.manifest, out / "c", cfg);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_EQ(e.exit_code(), 4);
    }
}

TEST(PredictEvaluate, OverfitProbeEndToEnd) {
    // the desk probe trained through the manifest path, then predicted and
    // evaluated on its own training tiles
    const fs::path input = probe_dataset("e2e", 64, 8);
    PipelineConfig cfg;
    cfg.seed = 1;
    cfg.curation.tile_size = 64;
    cfg.curation.hlf_threshold = 0.0;
    cfg.curation.split_ratio = 0.85;
    cfg.model.encoder_widths = {16, 16, 32, 64, 128};
    cfg.model.encoder_blocks = {1, 1, 1, 1};
    cfg.train.frozen_epochs = 2;
    cfg.train.unfrozen_epochs = 8;
    cfg.train.steps_per_epoch = 20;
    cfg.sync();
    const fs::path out = fresh("e2e_out");
    const auto r = cmd_curate(input, out / "data", cfg);
    const auto t = cmd_train(r.manifest, out / "run", cfg);
    const auto m = curation::read_manifest(r.manifest);
    std::vector<fs::path> tiles;
    for (const auto& e : m.with_split(curation::Split::Train)) tiles.push_back(out / "data" / e.tile_path);
    const auto p = cmd_predict(t.checkpoint, tiles, out / "pred", cfg);
    EXPECT_EQ(p.masks.size(), tiles.size());
    // ground truth restricted to the predicted ids
    const fs::path gt = fresh("e2e_gt");
    for (const auto& e : m.with_split(curation::Split::Train))
        fs::copy_file(out / "data" / e.mask_path, gt / fs::path(e.mask_path).filename());
    const auto ev = cmd_evaluate(out / "pred", gt, {}, out / "eval", PipelineConfig{});
    evaluation::ConfusionCounts total;
    for (const auto& [id, c] : ev.per_image) total += c;
    EXPECT_GE(evaluation::metrics(total).iou(), 0.95);
}

TEST(Predict, NamesEqualizeAndErrors) {
    const fs::path input = probe_dataset("pred", 64, 2);
    auto cfg = small_config();
    cfg.curation.hlf_threshold = 0.0;
    const fs::path out = fresh("pred_out");
    const auto r = cmd_curate(input, out / "data", cfg);
    const auto m = cmd_featurize(r.manifest, cfg);
    const auto t = cmd_train(r.manifest, out / "run", cfg);
    const auto p = cmd_predict(t.checkpoint, {out / "data" / "tiles"}, out / "pred", cfg);
    EXPECT_EQ(p.masks.size(), 2 * m.entries.size());  // tiles and their cb0 copies
    EXPECT_TRUE(fs::exists(out / "pred" / (fs::path(m.entries[0].tile_path).stem().string() + "_prob.png")));

    const fs::path flat = out / "flat.png";
    save_raster(make_rgb_tile(Grid<double>(32, 32, 255.0), Grid<double>(32, 32, 255.0), Grid<double>(32, 32, 255.0)),
                flat);
    save_raster(make_rgb_tile(Grid<double>(32, 32, 70.0), Grid<double>(32, 32, 70.0), Grid<double>(32, 32, 70.0)),
                out / "flat70.png");
    cmd_predict(t.checkpoint, {out / "flat70.png"}, out / "plain", cfg);
    auto eq = cfg;
    eq.equalize = true;
    cmd_predict(t.checkpoint, {out / "flat70.png"}, out / "eq", eq);
    EXPECT_EQ(slurp(out / "plain" / "flat70_prob.png"), slurp(out / "eq" / "flat70_prob.png"));

    EXPECT_THROW(cmd_predict(t.checkpoint, {out / "nope.png"}, out / "x", cfg), DataError);
    save_raster(make_rgb_tile(Grid<double>(16, 16), Grid<double>(16, 16), Grid<double>(16, 16)), out / "small.png");
    EXPECT_THROW(cmd_predict(t.checkpoint, {out / "small.png"}, out / "x", cfg), DataError);
}

TEST(Evaluate, IdenticalDirsHandCaseAndMissing) {
    const fs::path gt = fresh("eval_gt"), pred = fresh("eval_pred"), out = fresh("eval_out");
    MaskTile g(2, 2), p(2, 2);
    g.set(0, 0, true);
    g.set(1, 0, true);
    p.set(0, 0, true);
    p.set(0, 1, true);
    save_mask(g, gt / "a.png");
    save_mask(p, pred / "a_mask.png");
    save_mask(g, gt / "b.png");
    save_mask(g, pred / "b.png");
    std::ofstream(out / "groups.tsv") << "a\tx\nb\ty\n";
    const auto r = cmd_evaluate(pred, gt, out / "groups.tsv", out, PipelineConfig{});
    const std::string csv = slurp(out / "metrics.csv");
    EXPECT_EQ(csv, std::string(kMetricsHeader) + "\n" + "a,x,1,1,1,1,0.5,0.5,0.5,0.5,1,1,0.3333333333333333\n" +
                       "b,y,2,2,0,0,1,1,1,1,0,0,1\n");
    EXPECT_TRUE(fs::exists(out / "maps" / "a_confusion.png"));
    EXPECT_EQ(r.group_reports.at("y").iou(), 1.0);

    fs::remove(gt / "b.png");
    try {
        cmd_evaluate(pred, gt, {}, out, PipelineConfig{});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("b (no ground truth)"), std::string::npos) << e.what();
    }
}
