#include "motion/finetune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <tuple>

#include "motion/checkpoint.hpp"
#include "motion/errors.hpp"
#include "motion/optim.hpp"

namespace motion {

void FreezeMask::validate() const {
    if (std::none_of(trainable.begin(), trainable.end(), [](bool b) { return b; })) {
        throw ConfigError("freeze mask leaves no trainable parameter group");
    }
}

void FinetuneConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("finetune.learning_rate must be > 0");
    if (!(learning_rate < phase1_learning_rate)) {
        throw ConfigError("finetune.learning_rate must be lower than the phase-1 learning rate");
    }
    if (batch_size == 0) throw ConfigError("finetune.batch_size must be >= 1");
    if (patience == 0) throw ConfigError("finetune.patience must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
        throw ConfigError("invalid Adam hyperparameters");
    }
    mask.validate();
}

FreezePartition freeze_partition(ModelParams& params, const FreezeMask& mask) {
    mask.validate();
    FreezePartition part;
    for (Parameter* p : params.parameters()) {
        if (mask.is_trainable(p->group)) {
            part.trainable.push_back(p);
        } else {
            part.frozen.push_back(p);
        }
    }
    return part;
}

FinetuneWindows split_finetune_windows(std::span<const MotionWindow> windows) {
    FinetuneWindows out;
    std::size_t lo = 0;
    while (lo < windows.size()) {
        const auto key = [&](std::size_t i) {
            const auto& p = windows[i].provenance;
            return std::tie(p.subject_id, p.activity_id, p.trial_id);
        };
        std::size_t hi = lo + 1;
        while (hi < windows.size() && key(hi) == key(lo)) ++hi;
        const std::size_t n = hi - lo;
        const std::size_t n_val = n >= 2 ? std::max<std::size_t>(1, n / 4) : 0;
        for (std::size_t i = lo; i < hi; ++i) (i < hi - n_val ? out.train : out.val).push_back(windows[i]);
        lo = hi;
    }
    if (out.train.empty() || out.val.empty()) {
        throw ConfigError("fine-tune data too small to hold out a validation slice");
    }
    return out;
}

Phase2Result train_phase2(const ModelParams& pretrained, const NormStats& stats, std::span<const MotionWindow> windows,
                          const FinetuneConfig& config) {
    config.validate();
    if (windows.empty()) throw ConfigError("phase 2 needs at least one fine-tuning window");
    for (const auto& w : windows) {
        if (w.observed.cols() != pretrained.hyper().pose_dim()) {
            throw DimensionError("fine-tune windows have pose dim " + std::to_string(w.observed.cols()) +
                                 ", checkpoint expects " + std::to_string(pretrained.hyper().pose_dim()));
        }
    }

    Phase2Result result{pretrained, {}};
    if (config.max_epochs == 0) return result;

    FinetuneWindows split = split_finetune_windows(windows);
    std::mt19937_64 rng(config.seed);
    if (config.sample_budget > 0 && config.sample_budget < split.train.size()) {
        std::vector<std::size_t> idx(split.train.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(config.sample_budget);
        std::sort(idx.begin(), idx.end());
        std::vector<MotionWindow> kept;
        for (std::size_t i : idx) kept.push_back(split.train[i]);
        split.train = std::move(kept);
    }

    ModelParams params = pretrained;
    std::array<std::uint64_t, kParamGroupCount> frozen_hash{};
    for (std::size_t i = 0; i < kParamGroupCount; ++i) frozen_hash[i] = group_hash(params, static_cast<ParamGroup>(i));

    FreezePartition part = freeze_partition(params, config.mask);
    Adam opt(part.trainable, AdamConfig{config.learning_rate, config.beta1, config.beta2, config.adam_eps});

    using Clock = std::chrono::steady_clock;
    TrainLog& log = result.log;
    log.initial_recon_train = evaluate_recon(params, stats, split.train);
    log.best_recon_val = evaluate_recon(params, stats, split.val);
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto started = Clock::now();
        double recon_sum = 0.0;
        std::size_t seen = 0;
        const auto batches = shuffled_batches(split.train, config.batch_size, rng);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            try {
                const Batch batch = make_batch(batches[bi], stats);
                Graph g;
                for (std::size_t i = 0; i < kParamGroupCount; ++i) {
                    const auto grp = static_cast<ParamGroup>(i);
                    g.set_group_grad(grp, config.mask.is_trainable(grp));
                }
                const EncodeResult enc = encode(g, batch.inputs, params);
                const auto preds = rollout(g, batch, enc.latent, params);
                Var loss = rollout_loss(g, batch, preds);
                g.backward(loss);
                opt.step(g);
                recon_sum += loss.value().item() * static_cast<double>(batches[bi].size());
                seen += batches[bi].size();
            } catch (const NumericError& err) {
                throw NumericError("phase 2 diverged at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(bi + 1) + ": " + err.what());
            }
        }
        EpochLog e;
        e.epoch = epoch;
        e.recon_train = recon_sum / static_cast<double>(seen);
        e.recon_val = evaluate_recon(params, stats, split.val);
        if (!std::isfinite(e.recon_val)) {
            throw NumericError("phase 2 diverged at epoch " + std::to_string(epoch) + ": validation loss non-finite");
        }
        e.wall_time_s = std::chrono::duration<double>(Clock::now() - started).count();
        log.epochs.push_back(e);

        if (e.recon_val < log.best_recon_val) {
            log.best_recon_val = e.recon_val;
            log.best_epoch = epoch;
            result.params = params;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            log.early_stopped = true;
            break;
        }
    }

    for (std::size_t i = 0; i < kParamGroupCount; ++i) {
        const auto grp = static_cast<ParamGroup>(i);
        if (!config.mask.is_trainable(grp) && group_hash(result.params, grp) != frozen_hash[i]) {
            throw std::logic_error("frozen group " + std::string(group_name(grp)) + " changed during fine-tuning");
        }
    }
    return result;
}

}  // namespace motion
