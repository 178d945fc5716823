#ifndef GEOSEG_TRAINING_TRAINER_HPP
#define GEOSEG_TRAINING_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/core/format.hpp"
#include "geoseg/core/rng.hpp"
#include "geoseg/curation/curation.hpp"
#include "geoseg/evaluation/metrics.hpp"
#include "geoseg/network/model.hpp"
#include "geoseg/training/adam.hpp"
#include "geoseg/training/loss.hpp"
#include "geoseg/training/schedule.hpp"

namespace geoseg::training {

struct TrainPolicy {
    int frozen_epochs = 15;
    int unfrozen_epochs = 15;
    int batch_size = 8;
    /// Optimizer steps per epoch; 0 means one pass over the training set.
    /// Batches are drawn from consecutive seeded permutations, so an epoch
    /// may span several passes.
    int steps_per_epoch = 0;
    bool fallback = true;
    std::uint64_t seed = 0;
    AdamConfig adam;
    /// Loss minimised on the training set. Validation always uses combo.
    LossKind loss = LossKind::Combo;

    void validate() const {
        if (frozen_epochs < 0 || unfrozen_epochs < 0 || frozen_epochs + unfrozen_epochs < 1)
            throw ConfigError("training needs at least one epoch");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
        adam.validate();
    }
};

struct EpochRecord {
    int epoch = 0;  // 1-based over both phases
    std::string phase;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_iou = 0.0;
    double lr_first = 0.0;
    double lr_last = 0.0;
    bool fellback = false;
    std::vector<double> lr_trace;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    std::string rng_state;
};

/// Hooks for instrumentation. `after_epoch` runs after the epoch's
/// optimizer steps and before validation.
struct TrainHooks {
    std::function<void(int epoch, network::SegModel&)> before_epoch;
    std::function<void(int epoch, network::SegModel&)> after_epoch;
};

inline std::string rng_state(const Rng& rng) {
    std::ostringstream os;
    os << rng.engine();
    return os.str();
}

/// Tiles and masks flattened into network-ready form.
class PreparedSet {
public:
    PreparedSet(const std::vector<curation::TilePair>& pairs, const network::ModelConfig& cfg) {
        if (pairs.empty()) throw ConfigError("training: empty dataset");
        for (const auto& p : pairs) {
            if (static_cast<int>(p.image.height()) != cfg.height || static_cast<int>(p.image.width()) != cfg.width)
                throw DataError("tile '" + p.image.source_id + "' does not match the model input size");
            if (p.mask.height() != p.image.height() || p.mask.width() != p.image.width())
                throw DataError("tile '" + p.image.source_id + "' and its mask differ in size");
            inputs_.push_back(network::to_input({&p.image}));
            const auto v = p.mask.data().values();
            masks_.emplace_back(v.begin(), v.end());
        }
    }

    std::size_t size() const noexcept { return inputs_.size(); }

    nn::Tensor batch(std::span<const std::size_t> idx) const {
        const nn::Tensor& first = inputs_[idx[0]];
        nn::Tensor out = nn::Tensor::nchw(static_cast<int>(idx.size()), first.c(), first.h(), first.w());
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy_n(inputs_[idx[i]].data(), first.numel(), out.data() + i * first.numel());
        return out;
    }

    std::vector<std::vector<std::uint8_t>> masks(std::span<const std::size_t> idx) const {
        std::vector<std::vector<std::uint8_t>> out;
        for (auto i : idx) out.push_back(masks_[i]);
        return out;
    }

    const std::vector<std::uint8_t>& mask(std::size_t i) const { return masks_[i]; }

private:
    std::vector<nn::Tensor> inputs_;
    std::vector<std::vector<std::uint8_t>> masks_;
};

struct SetScore {
    double loss = 0.0;  // mean per-image loss
    evaluation::ConfusionCounts counts;
    double iou() const { return evaluation::metrics(counts).iou(); }
};

/// Inference-mode loss and pooled confusion counts over a set.
inline SetScore score_set(network::SegModel& model, const PreparedSet& set, const LossConfig& loss_cfg,
                          LossKind kind = LossKind::Combo, int batch_size = 8, double threshold = 0.5) {
    SetScore s;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
        const nn::Tensor logits = model.forward(set.batch(idx));
        const auto masks = set.masks(idx);
        s.loss += logits_loss(kind, logits, masks, loss_cfg) * static_cast<double>(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const ProbMap p = network::probability_map(logits, static_cast<int>(i));
            const auto pred = evaluation::binarize(p, threshold);
            const auto pv = pred.data().values();
            for (std::size_t k = 0; k < pv.size(); ++k) {
                const bool a = pv[k], b = masks[i][k];
                if (a && b) ++s.counts.tp;
                else if (a) ++s.counts.fp;
                else if (b) ++s.counts.fn;
                else ++s.counts.tn;
            }
        }
    }
    s.loss /= static_cast<double>(set.size());
    return s;
}

inline SetScore score_set(network::SegModel& model, const std::vector<curation::TilePair>& pairs,
                          const LossConfig& loss_cfg = {}, LossKind kind = LossKind::Combo) {
    return score_set(model, PreparedSet(pairs, model.config()), loss_cfg, kind);
}

/// Two-phase training: `frozen_epochs` with only the head trainable, then
/// `unfrozen_epochs` with everything trainable. The schedule restarts at
/// each phase. After every epoch the validation combo loss is compared
/// with the best so far; if it is not strictly lower and fallback is on,
/// weights, batch-norm statistics and optimizer state are restored from
/// the best epoch. The best state is loaded on return.
class Trainer {
public:
    Trainer(network::SegModel& model, TrainPolicy policy, SchedulePolicy schedule, LossConfig loss)
        : model_(model), pol_(policy), sch_(schedule), loss_(loss), adam_(policy.adam) {
        pol_.validate();
        sch_.validate();
        loss_.validate();
    }

    TrainHooks hooks;

    TrainResult fit(const std::vector<curation::TilePair>& train, const std::vector<curation::TilePair>& val) {
        const PreparedSet train_set(train, model_.config());
        const PreparedSet val_set(val, model_.config());
        Rng rng(pol_.seed);
        TrainResult result;
        Snapshot best;
        const auto params = model_.parameters();
        const std::int64_t steps_per_epoch =
            pol_.steps_per_epoch > 0
                ? pol_.steps_per_epoch
                : (static_cast<std::int64_t>(train_set.size()) + pol_.batch_size - 1) / pol_.batch_size;
        std::vector<std::size_t> order(train_set.size());
        std::size_t cursor = order.size();  // forces a shuffle before the first batch

        int epoch = 0;
        for (const auto& [phase, epochs] : {std::pair{network::FreezePolicy::Frozen, pol_.frozen_epochs},
                                            std::pair{network::FreezePolicy::Unfrozen, pol_.unfrozen_epochs}}) {
            if (epochs == 0) continue;
            model_.set_frozen(phase);
            const SchedulePolicy sch = sch_.resolved(steps_per_epoch, steps_per_epoch * epochs);
            std::int64_t step = 0;
            for (int e = 0; e < epochs; ++e) {
                ++epoch;
                if (hooks.before_epoch) hooks.before_epoch(epoch, model_);
                EpochRecord rec;
                rec.epoch = epoch;
                rec.phase = phase == network::FreezePolicy::Frozen ? "frozen" : "unfrozen";

                double loss_sum = 0.0;
                std::size_t seen = 0;
                for (std::int64_t b = 0; b < steps_per_epoch; ++b, ++step) {
                    if (cursor == order.size()) {
                        std::iota(order.begin(), order.end(), std::size_t{0});
                        rng.shuffle(std::span<std::size_t>(order));
                        cursor = 0;
                    }
                    const std::size_t hi = std::min(order.size(), cursor + pol_.batch_size);
                    const std::span<const std::size_t> idx(order.data() + cursor, hi - cursor);
                    cursor = hi;
                    const double lr = schedule_lr(sch, step);
                    const double beta1 = schedule_momentum(sch, step, pol_.adam.beta1);
                    const double l = train_step(train_set, idx, params, lr, beta1);
                    if (!std::isfinite(l))
                        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                           std::to_string(b + 1));
                    loss_sum += l * static_cast<double>(idx.size());
                    seen += idx.size();
                    rec.lr_trace.push_back(lr);
                }
                rec.train_loss = loss_sum / static_cast<double>(seen);
                rec.lr_first = rec.lr_trace.front();
                rec.lr_last = rec.lr_trace.back();
                if (hooks.after_epoch) hooks.after_epoch(epoch, model_);

                const SetScore v = score_set(model_, val_set, loss_, LossKind::Combo, pol_.batch_size);
                if (!std::isfinite(v.loss))
                    throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
                rec.val_loss = v.loss;
                rec.val_iou = v.iou();
                if (v.loss < result.best_val_loss) {
                    result.best_val_loss = v.loss;
                    result.best_epoch = epoch;
                    best = take_snapshot();
                } else if (pol_.fallback) {
                    restore(best);
                    rec.fellback = true;
                }
                result.history.push_back(std::move(rec));
            }
        }
        if (!best.values.empty()) restore(best);
        result.rng_state = rng_state(rng);
        return result;
    }

    Adam& optimizer() noexcept { return adam_; }

private:
    struct Snapshot {
        std::vector<nn::Tensor> values, m, v;
        std::int64_t adam_t = 0;
    };

    Snapshot take_snapshot() {
        Snapshot s;
        auto visit = model_.visit();
        for (auto* p : visit.params) {
            s.values.push_back(p->value);
            s.m.push_back(p->adam_m);
            s.v.push_back(p->adam_v);
        }
        for (auto& b : visit.buffers) s.values.push_back(*b.value);
        s.adam_t = adam_.step_count();
        return s;
    }

    void restore(const Snapshot& s) {
        auto visit = model_.visit();
        std::size_t i = 0;
        for (std::size_t k = 0; k < visit.params.size(); ++k, ++i) {
            visit.params[k]->value = s.values[i];
            visit.params[k]->adam_m = s.m[k];
            visit.params[k]->adam_v = s.v[k];
        }
        for (auto& b : visit.buffers) *b.value = s.values[i++];
        adam_.set_step_count(s.adam_t);
    }

    double train_step(const PreparedSet& set, std::span<const std::size_t> idx, const std::vector<nn::Parameter*>& params,
                      double lr, double beta1) {
        nn::Tape tape;
        nn::Context ctx{true, &tape};
        const nn::Var out = model_.forward(ctx, nn::make_var(set.batch(idx)));
        nn::Tensor dlogits;
        const double l = logits_loss(pol_.loss, out->value, set.masks(idx), loss_, &dlogits);
        if (!std::isfinite(l)) return l;
        Adam::zero_grad(params);
        tape.backward(out, dlogits);
        adam_.step(params, lr, beta1);
        return l;
    }

    network::SegModel& model_;
    TrainPolicy pol_;
    SchedulePolicy sch_;
    LossConfig loss_;
    Adam adam_;
};

inline constexpr const char* kHistoryHeader = "epoch,phase,train_loss,val_loss,val_iou,lr_first,lr_last,fellback";

inline std::string history_csv(const std::vector<EpochRecord>& history) {
    std::string s = std::string(kHistoryHeader) + "\n";
    for (const auto& r : history) {
        s += std::to_string(r.epoch) + "," + r.phase + "," + format_double(r.train_loss) + "," +
             format_double(r.val_loss) + "," + format_double(r.val_iou) + "," + format_double(r.lr_first) + "," +
             format_double(r.lr_last) + "," + (r.fellback ? "1" : "0") + "\n";
    }
    return s;
}

inline void write_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write history '" + path.string() + "'");
    out << history_csv(history);
}

}  // namespace geoseg::training

#endif  // GEOSEG_TRAINING_TRAINER_HPP
