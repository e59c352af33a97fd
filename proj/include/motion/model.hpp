#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "motion/autodiff.hpp"
#include "motion/dataset.hpp"
#include "motion/skeleton.hpp"

namespace motion {

struct ModelHyper {
    std::size_t joints = 20;
    std::size_t dims = 3;
    std::size_t hidden = 64;
    std::size_t latent_z = 32;
    std::size_t latent_c = 27;
    std::size_t heads = 4;
    std::size_t spl_hidden = 32;
    std::size_t disc_hidden = 32;
    bool spl_residual = false;  // add the previous pose to the SPL output

    std::size_t pose_dim() const { return joints * dims; }
    void validate() const;
    bool operator==(const ModelHyper&) const = default;
};

struct Linear {
    Parameter w;  // [in x out]
    Parameter b;  // [out]
};

// Gates stacked as [reset | update | candidate].
struct GruCell {
    Parameter w;        // [in x 3h]
    Parameter u_gates;  // [h x 2h], reset and update
    Parameter u_cand;   // [h x h], applied to r * h
    Parameter b;        // [3h]
};

struct MultiHeadAttention {
    Parameter wq, wk, wv, wo;  // [d x d]
    Linear flatten;            // [tokens*d x d]
    std::size_t heads = 1;
};

struct Mlp {
    Linear hidden;
    Linear out;
};

struct EncoderParams {
    std::array<GruCell, 3> streams;  // position, velocity, acceleration
    MultiHeadAttention fuse;
};

struct LatentHeadParams {
    Linear z;
    Linear c;
};

struct DecoderParams {
    Linear token_z, token_c, token_h;
    MultiHeadAttention attention;
    Linear context;  // attention output -> recurrent state offset
    GruCell gru;
    std::vector<Mlp> spl;  // one per joint, indexed by joint id
};

struct DiscriminatorParams {
    Mlp z;
    Mlp c;
};

class ModelParams {
public:
    ModelParams() = default;
    // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    ModelParams(const ModelHyper& hyper, SkeletonTree tree, std::uint64_t seed);

    const ModelHyper& hyper() const noexcept { return hyper_; }
    const SkeletonTree& tree() const noexcept { return tree_; }

    EncoderParams encoder;
    LatentHeadParams latent;
    DecoderParams decoder;
    DiscriminatorParams discriminators;

    // Canonical order; stable for a given hyper block.
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::vector<Parameter*> group(ParamGroup g);
    std::vector<const Parameter*> group(ParamGroup g) const;
    const Parameter* find(std::string_view name) const;
    Parameter* find(std::string_view name);

private:
    ModelHyper hyper_;
    SkeletonTree tree_;
};

// Per time step [B x N] inputs, already normalized.
struct StreamBatch {
    std::vector<Tensor> position;
    std::vector<Tensor> velocity;
    std::vector<Tensor> acceleration;

    std::size_t steps() const { return position.size(); }
    std::size_t batch() const { return position.empty() ? 0 : position.front().rows(); }
};

StreamBatch make_stream_batch(std::span<const MotionWindow* const> windows, const NormStats& stats);

struct LatentVars {
    Var z;  // [B x d_z]
    Var c;  // [B x d_c], rows on the simplex
};

struct EncoderState {
    Var h_pos, h_vel, h_acc, h_att;
};

struct AttentionResult {
    std::vector<Var> tokens;   // attended tokens after the output projection
    std::vector<Var> weights;  // weights[head * n + i]: [B x n] for query token i
    Var fused;                 // flattened tokens projected to [B x d]
};

struct EncodeResult {
    LatentVars latent;
    EncoderState final_state;
    std::vector<EncoderState> trajectory;  // per step when requested
    AttentionResult attention;             // fusion at the final step
};

struct DecoderState {
    Var pose;    // [B x N]
    Var hidden;  // [B x d]
};

Var linear(Graph& g, Var x, const Linear& layer);
Var gru_step(Graph& g, Var h_prev, Var x, const GruCell& cell);
AttentionResult attention_fuse(Graph& g, std::span<const Var> tokens, const MultiHeadAttention& att);
LatentVars latent_heads(Graph& g, Var h_att, const LatentHeadParams& heads);
EncodeResult encode(Graph& g, const StreamBatch& batch, const ModelParams& params, bool keep_trajectory = false);
Var spl_forward(Graph& g, Var h_dec, const ModelParams& params);
DecoderState decode_step(Graph& g, Var pose_prev, Var hidden_prev, const LatentVars& latent, const ModelParams& params);
Var initial_decoder_hidden(Graph& g, std::size_t batch, const ModelParams& params);

// Encodes, then rolls the decoder `horizon` steps from the last observed pose.
std::vector<Var> predict_sequence(Graph& g, const StreamBatch& batch, const ModelParams& params,
                                  std::size_t horizon);

// Inference helper in centimeters: one [H x N] prediction per window.
std::vector<Tensor> predict_windows(const ModelParams& params, const NormStats& stats,
                                    std::span<const MotionWindow> windows, std::size_t horizon);

// Discriminator probability that each latent row was drawn from the prior.
Var discriminate(Graph& g, Var latent, const Mlp& disc);

}  // namespace motion
