// geoseg: curate, featurize, train, predict, evaluate and ablate.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numeric failure, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geoseg/geoseg.hpp"

namespace fs = std::filesystem;
using namespace geoseg;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string composite;
    bool equalize = false;
    std::optional<double> threshold;
    std::string out_dir = ".";
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "TOML-style pipeline config file");
    cmd->add_option("--seed", f.seed, "Seed for every stochastic stage");
    cmd->add_option("--out-dir", f.out_dir, "Output directory");
    cmd->add_option("--set", f.overrides, "Override a config key, e.g. --set train.batch_size=4");
}

pipeline::PipelineConfig load_config(const CommonFlags& f) {
    pipeline::PipelineConfig cfg;
    if (!f.config.empty()) cfg = pipeline::make_config(pipeline::read_config_file(f.config));
    for (const auto& kv : f.overrides) pipeline::apply_override(cfg, kv);
    if (f.seed) cfg.seed = *f.seed;
    if (!f.composite.empty()) cfg.composite = features::parse_composite(f.composite);
    if (f.equalize) cfg.equalize = true;
    if (f.threshold) cfg.threshold = *f.threshold;
    cfg.sync();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Building segmentation pipeline"};
    app.require_subcommand(1);

    CommonFlags f;
    std::string input, manifest, checkpoint, pred_dir, gt_dir, groups;
    std::vector<std::string> inputs, focus;

    auto* curate = app.add_subcommand("curate", "Chip, HLF-filter and split image/mask pairs into a manifest");
    add_common(curate, f);
    curate->add_option("input", input, "Directory with images/ and masks/")->required();

    auto* featurize = app.add_subcommand("featurize", "Write composites and add them to the manifest");
    add_common(featurize, f);
    featurize->add_option("manifest", manifest)->required();
    featurize->add_option("--composite", f.composite, "cb0, cb1 or cb2");

    auto* train = app.add_subcommand("train", "Train on a manifest; writes model.gst and history.csv");
    add_common(train, f);
    train->add_option("manifest", manifest)->required();

    auto* predict = app.add_subcommand("predict", "Probability maps and masks for tiles");
    add_common(predict, f);
    predict->add_option("checkpoint", checkpoint)->required();
    predict->add_option("inputs", inputs, "Tile files or directories")->required();
    predict->add_flag("--equalize", f.equalize, "Histogram-equalise tiles first");
    predict->add_option("--threshold", f.threshold, "Binarisation threshold");

    auto* evaluate = app.add_subcommand("evaluate", "Metrics CSV and confusion maps");
    add_common(evaluate, f);
    evaluate->add_option("pred_dir", pred_dir)->required();
    evaluate->add_option("gt_dir", gt_dir)->required();
    evaluate->add_option("--groups", groups, "TSV of id<TAB>group");

    auto* ablate = app.add_subcommand("ablate", "Loss and training-policy comparisons");
    add_common(ablate, f);
    ablate->add_option("manifest", manifest)->required();
    ablate->add_option("--focus", focus, "Tile ids scored separately in the loss comparison");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto cfg = load_config(f);
        const fs::path out(f.out_dir);
        if (curate->parsed()) {
            const auto r = pipeline::cmd_curate(input, out, cfg);
            std::cout << "chips " << r.chips << ", kept " << r.kept << ", dropped " << r.dropped << " (train "
                      << r.train << ", val " << r.val << ")\n"
                      << "manifest " << r.manifest.string() << "\n";
        } else if (featurize->parsed()) {
            const auto m = pipeline::cmd_featurize(manifest, cfg);
            std::cout << "wrote " << m.entries.size() << " " << features::to_string(cfg.composite) << " composites\n";
        } else if (train->parsed()) {
            const auto r = pipeline::cmd_train(manifest, out, cfg);
            std::cout << "best epoch " << r.result.best_epoch << ", val loss " << format_double(r.result.best_val_loss)
                      << "\ncheckpoint " << r.checkpoint.string() << "\nhistory " << r.history.string() << "\n";
        } else if (predict->parsed()) {
            std::vector<fs::path> paths(inputs.begin(), inputs.end());
            const auto r = pipeline::cmd_predict(checkpoint, paths, out, cfg);
            std::cout << "predicted " << r.masks.size() << " tiles\n";
        } else if (evaluate->parsed()) {
            const auto r = pipeline::cmd_evaluate(pred_dir, gt_dir, groups, out, cfg);
            for (const auto& [g, rep] : r.group_reports)
                std::cout << g << ": accuracy " << format_fixed(rep.accuracy(), 4) << ", f1 " << format_fixed(rep.f1(), 4)
                          << ", iou " << format_fixed(rep.iou() * 100.0, 2) << "%\n";
        } else if (ablate->parsed()) {
            const auto r = pipeline::cmd_ablate(manifest, focus, out, cfg);
            for (const auto& row : r.losses)
                std::cout << training::to_string(row.loss) << ": val iou " << format_fixed(row.val_score.iou(), 4)
                          << ", focus iou " << format_fixed(row.focus_score.iou(), 4) << "\n";
            std::cout << "conventional final loss " << format_double(r.policy.conventional_final_loss) << " after "
                      << r.policy.conventional_epochs << " epochs; proposed reached it at epoch "
                      << r.policy.proposed_epochs_to_reach << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
