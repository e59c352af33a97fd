#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "motion/autodiff.hpp"
#include "motion/dataset.hpp"
#include "motion/model.hpp"
#include "motion/training.hpp"

namespace motion {

// Which parameter groups phase 2 may update. Defaults train the decoder only.
struct FreezeMask {
    std::array<bool, kParamGroupCount> trainable{false, false, true, false};

    bool is_trainable(ParamGroup g) const { return trainable[static_cast<std::size_t>(g)]; }
    void set_trainable(ParamGroup g, bool on) { trainable[static_cast<std::size_t>(g)] = on; }
    // Throws ConfigError when every group is frozen.
    void validate() const;
};

struct FinetuneConfig {
    double learning_rate = 1e-4;
    double phase1_learning_rate = 1e-3;  // must stay above learning_rate
    std::size_t batch_size = 32;
    std::size_t max_epochs = 30;
    std::size_t patience = 5;
    std::size_t sample_budget = 0;  // training windows to draw; 0 keeps them all
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    FreezeMask mask;

    void validate() const;
};

struct FreezePartition {
    std::vector<Parameter*> trainable;
    std::vector<const Parameter*> frozen;
};

FreezePartition freeze_partition(ModelParams& params, const FreezeMask& mask);

// The last quarter of each sequence's windows (in order) is held out for early
// stopping; the rest is the training pool.
struct FinetuneWindows {
    std::vector<MotionWindow> train;
    std::vector<MotionWindow> val;
};

FinetuneWindows split_finetune_windows(std::span<const MotionWindow> windows);

struct Phase2Result {
    ModelParams params;
    TrainLog log;
};

// Reconstruction-only fine-tuning of the groups the mask leaves trainable.
// Frozen groups come back bit-identical to the input.
Phase2Result train_phase2(const ModelParams& pretrained, const NormStats& stats, std::span<const MotionWindow> windows,
                          const FinetuneConfig& config);

}  // namespace motion
