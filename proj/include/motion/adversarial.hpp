#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include "motion/autodiff.hpp"
#include "motion/dataset.hpp"
#include "motion/model.hpp"
#include "motion/training.hpp"

namespace motion {

struct TrainConfig {
    double learning_rate = 1e-3;       // encoder, latent heads, decoder
    double disc_learning_rate = 3e-4;  // discriminators
    double lambda_adv = 1e-2;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double teacher_forcing = 0.0;

    void validate() const;
};

inline constexpr double kProbClamp = 1e-7;

struct PriorSamples {
    Tensor z;  // [B x d_z], standard normal
    Tensor c;  // [B x d_c], one-hot with uniform category
};

PriorSamples sample_priors(std::size_t batch, std::size_t d_z, std::size_t d_c, std::mt19937_64& rng);
PriorSamples sample_priors(std::size_t batch, std::size_t d_z, std::size_t d_c, std::uint64_t seed);

// -mean(log D(real)) - mean(log(1 - D(fake))); `fake` is detached.
Var disc_loss(Graph& g, const Mlp& disc, Var real, Var fake);
// -mean(log D(latent)); discriminator weights enter as constants.
Var gen_loss(Graph& g, const Mlp& disc, Var latent);

// Same objectives on precomputed probabilities [B x 1].
Var disc_loss_from_probs(Var p_real, Var p_fake);
Var gen_loss_from_probs(Var p_latent);

struct Phase1Result {
    ModelParams params;
    TrainLog log;
};

// Per batch: (a) reconstruction update of encoder, latent heads and decoder;
// (b) discriminator update against fresh prior samples; (c) regularization
// update of encoder and latent heads on lambda_adv * (gen_z + gen_c). Steps (a)
// and (c) share one Adam state; the discriminators have their own.
// Early-stops on validation reconstruction loss and returns the best weights.
// Throws NumericError (with epoch/batch) on divergence.
Phase1Result train_phase1(std::span<const MotionWindow> train, std::span<const MotionWindow> val, ModelParams params,
                          const NormStats& stats, const TrainConfig& config);

struct DiscriminatorAccuracy {
    double z = 0.0;
    double c = 0.0;
};

// Accuracy of both discriminators on latents of `windows` against the same
// number of prior samples; a sample counts as "prior" when D > 0.5.
DiscriminatorAccuracy discriminator_accuracy(const ModelParams& params, const NormStats& stats,
                                             std::span<const MotionWindow> windows, std::uint64_t seed);

}  // namespace motion
