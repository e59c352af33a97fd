#pragma once

// Pieces shared by the phase-1 and phase-2 training loops.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "motion/autodiff.hpp"
#include "motion/dataset.hpp"
#include "motion/model.hpp"

namespace motion {

// Mean squared error over every element; shapes must match.
Var recon_loss(Var predicted, Var target);
double recon_loss(const Tensor& predicted, const Tensor& target);

struct EpochLog {
    std::size_t epoch = 0;
    double recon_train = 0.0;
    double recon_val = 0.0;
    std::optional<double> disc_z, disc_c, gen_z, gen_c;  // absent in phase 2
    double wall_time_s = 0.0;
};

struct TrainLog {
    double initial_recon_train = 0.0;
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;  // 0 when no epoch improved on the initial weights
    double best_recon_val = 0.0;
    bool early_stopped = false;
};

// Columns: epoch,recon_train,recon_val,disc_z,disc_c,gen_z,gen_c,wall_time_s.
// Absent adversarial terms are written as empty fields.
void write_train_log(const std::filesystem::path& path, const TrainLog& log, bool include_wall_time = true);

// A training batch: encoder inputs plus normalized targets per horizon step.
struct Batch {
    StreamBatch inputs;
    std::vector<Tensor> targets;  // [B x N] per step
};

Batch make_batch(std::span<const MotionWindow* const> windows, const NormStats& stats);

// Autoregressive rollout on a batch. With teacher_forcing > 0, each step after
// the first feeds the ground-truth previous pose with that probability.
std::vector<Var> rollout(Graph& g, const Batch& batch, const LatentVars& latent, const ModelParams& params,
                         double teacher_forcing = 0.0, std::mt19937_64* rng = nullptr);

// Reconstruction loss of a rollout against the batch targets.
Var rollout_loss(Graph& g, const Batch& batch, std::span<const Var> predictions);

// Mean reconstruction loss (normalized units) over all windows, no gradients.
double evaluate_recon(const ModelParams& params, const NormStats& stats, std::span<const MotionWindow> windows,
                      std::size_t batch_size = 256);

// Batches of window pointers in a seeded shuffled order.
std::vector<std::vector<const MotionWindow*>> shuffled_batches(std::span<const MotionWindow> windows,
                                                               std::size_t batch_size, std::mt19937_64& rng);

}  // namespace motion
