#ifndef GEOSEG_NETWORK_MODEL_HPP
#define GEOSEG_NETWORK_MODEL_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geoseg/core/error.hpp"
#include "geoseg/core/rng.hpp"
#include "geoseg/nn/archive.hpp"
#include "geoseg/nn/layers.hpp"
#include "geoseg/nn/ops.hpp"
#include "geoseg/nn/tensor.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::network {

using nn::Context;
using nn::Tensor;
using nn::Var;

struct ModelConfig {
    int height = 224;
    int width = 224;
    int in_channels = 3;
    /// Stem width followed by the four residual stage widths.
    std::array<int, 5> encoder_widths{64, 64, 128, 256, 512};
    /// Residual blocks per stage; {3, 4, 6, 3} is the 34-layer layout.
    std::array<int, 4> encoder_blocks{3, 4, 6, 3};
    int out_classes = 2;
    std::uint64_t seed = 0;
    std::string pretrained_path;  // empty: He-initialised encoder

    void validate() const {
        if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0)
            throw ConfigError("model input size must be >= 32 and divisible by 32");
        if (out_classes != 2) throw ConfigError("model out_classes must be 2");
        if (in_channels < 1) throw ConfigError("model in_channels must be positive");
        for (int w : encoder_widths)
            if (w < 2 || w % 2 != 0) throw ConfigError("encoder widths must be positive and even");
        for (int b : encoder_blocks)
            if (b < 1) throw ConfigError("encoder stages need at least one block");
    }

    nlohmann::json to_json() const {
        return {{"height", height},           {"width", width},
                {"in_channels", in_channels}, {"encoder_widths", encoder_widths},
                {"encoder_blocks", encoder_blocks}, {"out_classes", out_classes},
                {"seed", seed}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.height = j.at("height");
        c.width = j.at("width");
        c.in_channels = j.at("in_channels");
        c.encoder_widths = j.at("encoder_widths").get<std::array<int, 5>>();
        c.encoder_blocks = j.at("encoder_blocks").get<std::array<int, 4>>();
        c.out_classes = j.at("out_classes");
        c.seed = j.at("seed");
        return c;
    }
};

enum class FreezePolicy { Frozen, Unfrozen };

/// Shapes of the intermediate maps of one forward pass, by name.
using ShapeTrace = std::map<std::string, std::vector<int>>;

/// Residual-encoder U-Net whose decoder widths are inferred from the
/// encoder.
///
/// Encoder: 7x7/2 stem, 3x3/2 max pool, four residual stages (strides
/// 1, 2, 2, 2) giving maps at 1/4, 1/8, 1/16, 1/32 of the input.
/// Middle: BN + ReLU, conv to twice the width and back.
/// Decoder blocks: shuffle-upsample x2 to half the channels, concatenate
/// the batch-normalised skip map (stage 3, 2, 1, then the stem), two
/// 3x3 conv-BN-ReLU layers. The first three keep their input width, the
/// last halves it.
/// Head: shuffle-upsample to full size, concatenate the input, a residual
/// pair of 3x3 convs, and a 1x1 conv to two class logits.
///
/// Parameter groups: encoder.stem, encoder.stage1..4, decoder.middle,
/// decoder.block1..4, head. Encoder tensor names follow the torchvision
/// ResNet layout under an "encoder." prefix.
class SegModel {
public:
    explicit SegModel(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        const auto& w = cfg_.encoder_widths;

        stem_conv_ = nn::Conv2d(rng, "encoder.conv1", "encoder.stem", cfg_.in_channels, w[0], 7, 2, 3, false);
        stem_bn_ = nn::BatchNorm2d("encoder.bn1", "encoder.stem", w[0]);
        for (int s = 0; s < 4; ++s) {
            const std::string group = "encoder.stage" + std::to_string(s + 1);
            auto& stage = stages_[s];
            stage.reserve(cfg_.encoder_blocks[s]);
            for (int b = 0; b < cfg_.encoder_blocks[s]; ++b) {
                const int in = b == 0 ? w[s] : w[s + 1];
                const int stride = (b == 0 && s > 0) ? 2 : 1;
                stage.emplace_back(rng, "encoder.layer" + std::to_string(s + 1) + "." + std::to_string(b), group, in,
                                   w[s + 1], stride);
            }
        }

        middle_bn_ = nn::BatchNorm2d("decoder.middle.bn", "decoder.middle", w[4]);
        middle_a_ = nn::ConvLayer(rng, "decoder.middle.conv_a", "decoder.middle", w[4], 2 * w[4], 3, 1);
        middle_b_ = nn::ConvLayer(rng, "decoder.middle.conv_b", "decoder.middle", 2 * w[4], w[4], 3, 1);

        const std::array<int, 4> skip_channels{w[3], w[2], w[1], w[0]};
        int up = w[4];
        for (int i = 0; i < 4; ++i) {
            const std::string group = "decoder.block" + std::to_string(i + 1);
            const int ni = up / 2 + skip_channels[i];
            const int nf = i < 3 ? ni : ni / 2;
            auto& blk = blocks_[i];
            blk.upsample = nn::ShuffleUpsample(rng, group + ".shuf", group, up, up / 2);
            blk.skip_bn = nn::BatchNorm2d(group + ".skip_bn", group, skip_channels[i]);
            blk.conv1 = nn::ConvLayer(rng, group + ".conv1", group, ni, nf, 3, 1);
            blk.conv2 = nn::ConvLayer(rng, group + ".conv2", group, nf, nf, 3, 1);
            up = nf;
        }
        if (up % 2 != 0) throw ConfigError("model: decoder width is odd; choose even encoder widths");

        head_upsample_ = nn::ShuffleUpsample(rng, "head.shuf", "head", up, up);
        const int cross = up + cfg_.in_channels;
        head_res_a_ = nn::ConvLayer(rng, "head.res.conv_a", "head", cross, cross, 3, 1);
        head_res_b_ = nn::ConvLayer(rng, "head.res.conv_b", "head", cross, cross, 3, 1, false);
        pooler_ = nn::Conv2d(rng, "head.pooler", "head", cross, cfg_.out_classes, 1, 1, 0, true);

        if (!cfg_.pretrained_path.empty()) load_pretrained_encoder(cfg_.pretrained_path);
    }

    SegModel(const SegModel&) = delete;
    SegModel& operator=(const SegModel&) = delete;

    const ModelConfig& config() const noexcept { return cfg_; }

    /// Logits (N, 2, H, W) for an (N, C, H, W) input.
    Var forward(Context& ctx, const Var& input, ShapeTrace* trace = nullptr) {
        const Tensor& x = input->value;
        if (x.rank() != 4 || x.c() != cfg_.in_channels || x.h() != cfg_.height || x.w() != cfg_.width)
            throw ConfigError("forward: expected input N x " + std::to_string(cfg_.in_channels) + " x " +
                              std::to_string(cfg_.height) + " x " + std::to_string(cfg_.width) + ", got " +
                              x.shape_string());
        auto note = [&](const char* name, const Var& v) {
            if (trace) (*trace)[name] = v->value.shape();
        };

        Var stem = nn::relu(ctx, stem_bn_(ctx, stem_conv_(ctx, input)));
        note("stem", stem);
        Var y = nn::max_pool(ctx, stem, 3, 2, 1);
        std::array<Var, 4> skips{};
        static constexpr const char* kStageNames[] = {"stage1", "stage2", "stage3", "stage4"};
        for (int s = 0; s < 4; ++s) {
            for (auto& block : stages_[s]) y = block(ctx, y);
            note(kStageNames[s], y);
            skips[s] = y;
        }

        y = nn::relu(ctx, middle_bn_(ctx, y));
        y = middle_b_(ctx, middle_a_(ctx, y));
        note("middle", y);

        const std::array<Var, 4> cross{skips[2], skips[1], skips[0], stem};
        static constexpr const char* kBlockNames[] = {"block1", "block2", "block3", "block4"};
        for (int i = 0; i < 4; ++i) {
            auto& blk = blocks_[i];
            Var up = blk.upsample(ctx, y);
            Var skip = blk.skip_bn(ctx, cross[i]);
            y = nn::relu(ctx, nn::concat(ctx, up, skip));
            y = blk.conv2(ctx, blk.conv1(ctx, y));
            note(kBlockNames[i], y);
        }

        y = head_upsample_(ctx, y);
        note("head_upsample", y);
        y = nn::concat(ctx, y, input);
        Var res = head_res_b_(ctx, head_res_a_(ctx, y));
        y = nn::relu(ctx, nn::add(ctx, res, y));
        note("extension", y);
        Var logits = pooler_(ctx, y);
        note("logits", logits);
        return logits;
    }

    /// Inference forward pass (running batch-norm statistics, no tape).
    Tensor forward(const Tensor& input, ShapeTrace* trace = nullptr) {
        Context ctx;
        return forward(ctx, nn::make_var(input), trace)->value;
    }

    nn::ParamVisitor visit() {
        nn::ParamVisitor v;
        stem_conv_.visit(v);
        stem_bn_.visit(v);
        for (auto& stage : stages_)
            for (auto& block : stage) block.visit(v);
        middle_bn_.visit(v);
        middle_a_.visit(v);
        middle_b_.visit(v);
        for (auto& blk : blocks_) {
            blk.upsample.visit(v);
            blk.skip_bn.visit(v);
            blk.conv1.visit(v);
            blk.conv2.visit(v);
        }
        head_upsample_.visit(v);
        head_res_a_.visit(v);
        head_res_b_.visit(v);
        pooler_.visit(v);
        return v;
    }

    std::vector<nn::Parameter*> parameters() { return visit().params; }

    /// Every checkpointed tensor (parameters and batch-norm statistics).
    std::vector<std::pair<std::string, Tensor*>> named_tensors() {
        auto v = visit();
        std::vector<std::pair<std::string, Tensor*>> out;
        for (auto* p : v.params) out.emplace_back(p->name, &p->value);
        for (auto& b : v.buffers) out.emplace_back(b.name, b.value);
        return out;
    }

    static const std::vector<std::string>& group_names() {
        static const std::vector<std::string> names{
            "encoder.stem",   "encoder.stage1", "encoder.stage2", "encoder.stage3", "encoder.stage4", "decoder.middle",
            "decoder.block1", "decoder.block2", "decoder.block3", "decoder.block4", "head"};
        return names;
    }

    /// Frozen: every encoder and decoder group is fixed (weights and
    /// batch-norm statistics), only the head trains. Unfrozen: all train.
    void set_frozen(FreezePolicy policy) {
        for (auto* p : parameters()) p->trainable = policy == FreezePolicy::Unfrozen || p->group == "head";
    }

    bool group_trainable(const std::string& group) {
        for (auto* p : parameters())
            if (p->group == group) return p->trainable;
        throw ConfigError("unknown parameter group '" + group + "'");
    }

    /// Replace encoder weights and statistics from a tensor archive.
    /// Names are looked up with and without the "encoder." prefix; all
    /// shapes are checked before anything is copied.
    void load_pretrained_encoder(const std::filesystem::path& path) {
        const nn::Archive archive = nn::read_archive(path);
        auto v = visit();
        std::vector<std::pair<Tensor*, const Tensor*>> copies;
        auto group_of = [&](const std::string& name) {
            for (auto* p : v.params)
                if (p->name == name) return p->group;
            // buffers share their batch norm's group
            const auto stem = name.substr(0, name.rfind('.'));
            for (auto* p : v.params)
                if (p->name.rfind(stem + ".", 0) == 0) return p->group;
            return std::string("encoder");
        };
        for (auto& [name, tensor] : named_tensors()) {
            if (name.rfind("encoder.", 0) != 0) continue;
            auto it = archive.tensors.find(name);
            if (it == archive.tensors.end()) it = archive.tensors.find(name.substr(8));
            if (it == archive.tensors.end())
                throw DataError("pretrained encoder: '" + name + "' missing from archive (group " + group_of(name) + ")");
            if (!it->second.same_shape(*tensor))
                throw DataError("pretrained encoder: shape mismatch in group " + group_of(name) + " for '" + name +
                                "': archive " + it->second.shape_string() + ", model " + tensor->shape_string());
            copies.emplace_back(tensor, &it->second);
        }
        for (auto& [dst, src] : copies) *dst = *src;
    }

    nn::Archive to_archive(nlohmann::json metadata = nlohmann::json::object()) {
        nn::Archive a;
        for (auto& [name, t] : named_tensors()) a.tensors.emplace(name, *t);
        metadata["config"] = cfg_.to_json();
        a.metadata = std::move(metadata);
        return a;
    }

    /// Copy every tensor from an archive holding this architecture.
    void load_archive(const nn::Archive& a) {
        std::vector<std::pair<Tensor*, const Tensor*>> copies;
        for (auto& [name, t] : named_tensors()) {
            auto it = a.tensors.find(name);
            if (it == a.tensors.end()) throw DataError("checkpoint is missing '" + name + "'");
            if (!it->second.same_shape(*t)) throw DataError("checkpoint shape mismatch for '" + name + "'");
            copies.emplace_back(t, &it->second);
        }
        for (auto& [dst, src] : copies) *dst = *src;
    }

private:
    struct UnetBlock {
        nn::ShuffleUpsample upsample;
        nn::BatchNorm2d skip_bn;
        nn::ConvLayer conv1;
        nn::ConvLayer conv2;
    };

    ModelConfig cfg_;
    nn::Conv2d stem_conv_;
    nn::BatchNorm2d stem_bn_;
    std::array<std::vector<nn::BasicBlock>, 4> stages_;
    nn::BatchNorm2d middle_bn_;
    nn::ConvLayer middle_a_;
    nn::ConvLayer middle_b_;
    std::array<UnetBlock, 4> blocks_;
    nn::ShuffleUpsample head_upsample_;
    nn::ConvLayer head_res_a_;
    nn::ConvLayer head_res_b_;
    nn::Conv2d pooler_;
};

inline std::unique_ptr<SegModel> build_model(const ModelConfig& cfg) { return std::make_unique<SegModel>(cfg); }

inline void save_checkpoint(SegModel& model, const std::filesystem::path& path, nlohmann::json metadata = {}) {
    if (metadata.is_null()) metadata = nlohmann::json::object();
    nn::write_archive(model.to_archive(std::move(metadata)), path);
}

/// Rebuild a model from a checkpoint written by save_checkpoint.
inline std::unique_ptr<SegModel> load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr) {
    const nn::Archive a = nn::read_archive(path);
    if (!a.metadata.contains("config")) throw DataError("checkpoint '" + path.string() + "' has no model config");
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_json(a.metadata.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path.string() + "': bad model config: " + e.what());
    }
    auto model = build_model(cfg);
    model->load_archive(a);
    if (metadata) *metadata = a.metadata;
    return model;
}

// ---- tiles <-> network tensors ----

inline constexpr std::array<float, 3> kChannelMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kChannelStd{0.229f, 0.224f, 0.225f};

/// Byte-range tile to a standardised (1, 3, H, W) tensor slice at `index`
/// of `batch`.
inline void write_input(const Tile& tile, Tensor& batch, int index) {
    if (tile.band_count() != 3 || static_cast<int>(tile.height()) != batch.h() ||
        static_cast<int>(tile.width()) != batch.w())
        throw ConfigError("tile does not match the network input shape");
    for (int c = 0; c < 3; ++c) {
        const auto vals = tile.bands[c].data.values();
        for (int y = 0; y < batch.h(); ++y)
            for (int x = 0; x < batch.w(); ++x)
                batch.at(index, c, y, x) =
                    (static_cast<float>(vals[static_cast<std::size_t>(y) * batch.w() + x]) / 255.0f - kChannelMean[c]) /
                    kChannelStd[c];
    }
}

inline Tensor to_input(const std::vector<const Tile*>& tiles) {
    if (tiles.empty()) throw ConfigError("to_input: empty batch");
    Tensor batch = Tensor::nchw(static_cast<int>(tiles.size()), 3, static_cast<int>(tiles.front()->height()),
                                static_cast<int>(tiles.front()->width()));
    for (std::size_t i = 0; i < tiles.size(); ++i) write_input(*tiles[i], batch, static_cast<int>(i));
    return batch;
}

/// Building probability for image `index`: softmax over the two logits,
/// i.e. sigmoid(z_building - z_background).
inline ProbMap probability_map(const Tensor& logits, int index) {
    Grid<double> g(static_cast<std::size_t>(logits.h()), static_cast<std::size_t>(logits.w()));
    for (int y = 0; y < logits.h(); ++y)
        for (int x = 0; x < logits.w(); ++x) {
            const double d = static_cast<double>(logits.at(index, 1, y, x)) - logits.at(index, 0, y, x);
            g(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0 / (1.0 + std::exp(-d));
        }
    return ProbMap(std::move(g));
}

}  // namespace geoseg::network

#endif  // GEOSEG_NETWORK_MODEL_HPP
