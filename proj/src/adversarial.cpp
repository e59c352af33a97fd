#include "motion/adversarial.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "motion/checkpoint.hpp"
#include "motion/errors.hpp"
#include "motion/optim.hpp"

namespace motion {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(disc_learning_rate > 0.0)) throw ConfigError("train.disc_learning_rate must be > 0");
    if (!(lambda_adv >= 0.0)) throw ConfigError("train.lambda_adv must be >= 0");
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (patience == 0) throw ConfigError("train.patience must be >= 1");
    if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0)) throw ConfigError("train.teacher_forcing must lie in [0,1]");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
        throw ConfigError("invalid Adam hyperparameters");
    }
}

PriorSamples sample_priors(std::size_t batch, std::size_t d_z, std::size_t d_c, std::mt19937_64& rng) {
    if (batch == 0 || d_z == 0 || d_c == 0) throw ConfigError("sample_priors: sizes must be >= 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> category(0, d_c - 1);
    PriorSamples s{Tensor({batch, d_z}), Tensor({batch, d_c})};
    for (double& v : s.z.data()) v = normal(rng);
    for (std::size_t r = 0; r < batch; ++r) s.c[r * d_c + category(rng)] = 1.0;
    return s;
}

PriorSamples sample_priors(std::size_t batch, std::size_t d_z, std::size_t d_c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_priors(batch, d_z, d_c, rng);
}

Var disc_loss_from_probs(Var p_real, Var p_fake) {
    Var real_term = ops::mean(ops::log(ops::clamp(p_real, kProbClamp, 1.0 - kProbClamp)));
    Var fake_term = ops::mean(ops::log(ops::add_scalar(ops::scale(ops::clamp(p_fake, kProbClamp, 1.0 - kProbClamp), -1.0), 1.0)));
    return ops::scale(ops::add(real_term, fake_term), -1.0);
}

Var gen_loss_from_probs(Var p_latent) {
    return ops::scale(ops::mean(ops::log(ops::clamp(p_latent, kProbClamp, 1.0 - kProbClamp))), -1.0);
}

Var disc_loss(Graph& g, const Mlp& disc, Var real, Var fake) {
    return disc_loss_from_probs(discriminate(g, real, disc), discriminate(g, ops::detach(fake), disc));
}

namespace {

Var frozen_linear(Graph& g, Var x, const Linear& l) {
    return ops::add(ops::matmul(x, g.constant(l.w.value)), g.constant(l.b.value));
}

Var discriminate_frozen(Graph& g, Var x, const Mlp& disc) {
    return ops::sigmoid(frozen_linear(g, ops::tanh(frozen_linear(g, x, disc.hidden)), disc.out));
}

void require_unchanged(std::uint64_t before, const ModelParams& params, ParamGroup g, const char* step) {
    if (group_hash(params, g) != before) {
        throw std::logic_error(std::string(step) + " modified parameter group " + std::string(group_name(g)));
    }
}

}  // namespace

Var gen_loss(Graph& g, const Mlp& disc, Var latent) { return gen_loss_from_probs(discriminate_frozen(g, latent, disc)); }

Phase1Result train_phase1(std::span<const MotionWindow> train, std::span<const MotionWindow> val, ModelParams params,
                          const NormStats& stats, const TrainConfig& config) {
    config.validate();
    if (train.empty() || val.empty()) throw ConfigError("phase 1 needs non-empty training and validation windows");

    using Clock = std::chrono::steady_clock;
    // Encoder, latent heads and decoder share one set of Adam moments across
    // the reconstruction and regularization steps, so lambda_adv weighs the
    // adversarial gradient against the reconstruction gradient.
    std::vector<Parameter*> autoencoder;
    for (ParamGroup g : {ParamGroup::encoder, ParamGroup::latent, ParamGroup::decoder}) {
        for (Parameter* p : params.group(g)) autoencoder.push_back(p);
    }
    Adam model_opt(autoencoder, {config.learning_rate, config.beta1, config.beta2, config.adam_eps});
    Adam disc_opt(params.group(ParamGroup::discriminators),
                  {config.disc_learning_rate, config.beta1, config.beta2, config.adam_eps});
    constexpr std::array<ParamGroup, 2> regularized{ParamGroup::encoder, ParamGroup::latent};

    std::mt19937_64 shuffle_rng(config.seed);
    std::mt19937_64 prior_rng(config.seed ^ 0x5eedULL);
    std::mt19937_64 forcing_rng(config.seed ^ 0xf0c5ULL);
    const std::size_t d_z = params.hyper().latent_z, d_c = params.hyper().latent_c;

    Phase1Result result{params, {}};
    TrainLog& log = result.log;
    log.initial_recon_train = evaluate_recon(params, stats, train);
    log.best_recon_val = evaluate_recon(params, stats, val);
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto started = Clock::now();
        EpochLog e;
        e.epoch = epoch;
        double recon_sum = 0.0, dz_sum = 0.0, dc_sum = 0.0, gz_sum = 0.0, gc_sum = 0.0;
        std::size_t seen = 0;
        const auto batches = shuffled_batches(train, config.batch_size, shuffle_rng);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& ptrs = batches[bi];
            const double weight = static_cast<double>(ptrs.size());
            try {
                const Batch batch = make_batch(ptrs, stats);

                // (a) reconstruction
                {
                    const auto disc_hash = group_hash(params, ParamGroup::discriminators);
                    Graph g;
                    g.set_group_grad(ParamGroup::discriminators, false);
                    const EncodeResult enc = encode(g, batch.inputs, params);
                    const auto preds = rollout(g, batch, enc.latent, params, config.teacher_forcing, &forcing_rng);
                    Var loss = rollout_loss(g, batch, preds);
                    g.backward(loss);
                    model_opt.step(g);
                    recon_sum += loss.value().item() * weight;
                    require_unchanged(disc_hash, params, ParamGroup::discriminators, "reconstruction step");
                }

                // (b) discriminators
                {
                    std::array<std::uint64_t, 3> ae_hash{};
                    for (std::size_t i = 0; i < 3; ++i) ae_hash[i] = group_hash(params, static_cast<ParamGroup>(i));
                    Graph g;
                    for (ParamGroup grp : {ParamGroup::encoder, ParamGroup::latent, ParamGroup::decoder}) {
                        g.set_group_grad(grp, false);
                    }
                    const EncodeResult enc = encode(g, batch.inputs, params);
                    const PriorSamples prior = sample_priors(ptrs.size(), d_z, d_c, prior_rng);
                    Var lz = disc_loss(g, params.discriminators.z, g.constant(prior.z), enc.latent.z);
                    Var lc = disc_loss(g, params.discriminators.c, g.constant(prior.c), enc.latent.c);
                    g.backward(ops::add(lz, lc));
                    disc_opt.step(g);
                    dz_sum += lz.value().item() * weight;
                    dc_sum += lc.value().item() * weight;
                    for (std::size_t i = 0; i < 3; ++i) {
                        require_unchanged(ae_hash[i], params, static_cast<ParamGroup>(i), "discriminator step");
                    }
                }

                // (c) adversarial regularization of the encoder
                {
                    const auto disc_hash = group_hash(params, ParamGroup::discriminators);
                    const auto dec_hash = group_hash(params, ParamGroup::decoder);
                    Graph g;
                    g.set_group_grad(ParamGroup::decoder, false);
                    g.set_group_grad(ParamGroup::discriminators, false);
                    const EncodeResult enc = encode(g, batch.inputs, params);
                    Var gz = gen_loss(g, params.discriminators.z, enc.latent.z);
                    Var gc = gen_loss(g, params.discriminators.c, enc.latent.c);
                    if (config.lambda_adv > 0.0) {
                        g.backward(ops::scale(ops::add(gz, gc), config.lambda_adv));
                        model_opt.step(g, regularized);
                    }
                    gz_sum += gz.value().item() * weight;
                    gc_sum += gc.value().item() * weight;
                    require_unchanged(disc_hash, params, ParamGroup::discriminators, "regularization step");
                    require_unchanged(dec_hash, params, ParamGroup::decoder, "regularization step");
                }
            } catch (const NumericError& err) {
                throw NumericError("phase 1 diverged at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(bi + 1) + ": " + err.what());
            }
            seen += ptrs.size();
        }

        const double n = static_cast<double>(seen);
        e.recon_train = recon_sum / n;
        e.disc_z = dz_sum / n;
        e.disc_c = dc_sum / n;
        e.gen_z = gz_sum / n;
        e.gen_c = gc_sum / n;
        e.recon_val = evaluate_recon(params, stats, val);
        if (!std::isfinite(e.recon_val)) {
            throw NumericError("phase 1 diverged at epoch " + std::to_string(epoch) + ": validation loss non-finite");
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
    return result;
}

DiscriminatorAccuracy discriminator_accuracy(const ModelParams& params, const NormStats& stats,
                                             std::span<const MotionWindow> windows, std::uint64_t seed) {
    if (windows.empty()) throw ConfigError("discriminator_accuracy on zero windows");
    std::vector<const MotionWindow*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    Graph g;
    for (std::size_t i = 0; i < kParamGroupCount; ++i) g.set_group_grad(static_cast<ParamGroup>(i), false);
    const StreamBatch batch = make_stream_batch(ptrs, stats);
    const EncodeResult enc = encode(g, batch, params);
    const PriorSamples prior = sample_priors(ptrs.size(), params.hyper().latent_z, params.hyper().latent_c, seed);

    auto accuracy = [&](const Mlp& disc, Var fake, const Tensor& real) {
        const Tensor p_real = discriminate(g, g.constant(real), disc).value();
        const Tensor p_fake = discriminate(g, fake, disc).value();
        std::size_t correct = 0;
        for (std::size_t i = 0; i < p_real.size(); ++i) correct += p_real[i] > 0.5 ? 1 : 0;
        for (std::size_t i = 0; i < p_fake.size(); ++i) correct += p_fake[i] <= 0.5 ? 1 : 0;
        return static_cast<double>(correct) / static_cast<double>(p_real.size() + p_fake.size());
    };
    return {accuracy(params.discriminators.z, enc.latent.z, prior.z),
            accuracy(params.discriminators.c, enc.latent.c, prior.c)};
}

}  // namespace motion
