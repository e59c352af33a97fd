#include "motion/gradcheck_suite.hpp"

#include <array>
#include <cmath>
#include <random>

#include "motion/adversarial.hpp"
#include "motion/synth.hpp"
#include "motion/training.hpp"

namespace motion {

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

// Values with magnitude in [lo, hi] and random sign, keeping away from kinks at 0.
Tensor signed_away_from_zero(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution sign(0.5);
    Tensor t(shape);
    for (double& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
    return t;
}

Parameter input(std::string name, Tensor value) { return Parameter{std::move(name), ParamGroup::encoder, std::move(value)}; }

// mean(y * R) for a fixed pseudo-random R of mixed sign, so every output
// element matters and the scalar carries no large constant offset.
Var weighted(Graph& g, Var y, std::uint64_t salt) {
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ salt);
    return ops::mean(ops::mul(y, g.constant(signed_away_from_zero(y.shape(), rng, 0.5, 1.5))));
}

class Suite {
public:
    explicit Suite(const GradCheckOptions& o) : opt_(o), rng_(o.seed) {}

    void check(std::string name, const LossBuilder& f, std::vector<Parameter*> params) {
        entries_.push_back({std::move(name), grad_check(f, params, opt_.eps, opt_.tol)});
    }

    std::mt19937_64& rng() { return rng_; }
    std::vector<GradCheckEntry>& entries() { return entries_; }

private:
    GradCheckOptions opt_;
    std::mt19937_64 rng_;
    std::vector<GradCheckEntry> entries_;
};

void op_checks(Suite& s) {
    auto& rng = s.rng();
    Parameter a = input("a", random_tensor({3, 4}, rng));
    Parameter b = input("b", random_tensor({4, 2}, rng));
    Parameter c = input("c", random_tensor({3, 4}, rng));
    Parameter row = input("row", random_tensor({4}, rng));
    Parameter one = input("scalar", random_tensor({1}, rng));
    Parameter col = input("col", random_tensor({3, 1}, rng));
    Parameter kinked = input("x", signed_away_from_zero({3, 4}, rng, 0.1, 1.0));
    Parameter positive = input("x", random_tensor({3, 4}, rng, 0.5, 2.0));
    Parameter clamp_in = input("x", signed_away_from_zero({3, 4}, rng, 0.05, 1.0));
    for (std::size_t i = 0; i < clamp_in.value.size(); ++i) {
        // keep clear of the clamp bounds at +-0.5
        if (std::abs(std::abs(clamp_in.value[i]) - 0.5) < 0.05) clamp_in.value[i] *= 1.3;
    }
    Parameter wide = input("x", random_tensor({3, 4}, rng, -3.0, 3.0));

    auto unary = [&](std::string name, Parameter& x, auto fn) {
        s.check(name, [&x, fn](Graph& g) { return weighted(g, fn(g.param(x)), 1); }, {&x});
    };
    auto binary = [&](std::string name, Parameter& x, Parameter& y, auto fn) {
        s.check(name, [&x, &y, fn](Graph& g) { return weighted(g, fn(g.param(x), g.param(y)), 2); }, {&x, &y});
    };

    binary("matmul", a, b, [](Var x, Var y) { return ops::matmul(x, y); });
    binary("add", a, c, [](Var x, Var y) { return ops::add(x, y); });
    binary("add_broadcast_row", a, row, [](Var x, Var y) { return ops::add(x, y); });
    binary("add_broadcast_scalar", a, one, [](Var x, Var y) { return ops::add(x, y); });
    binary("sub", a, c, [](Var x, Var y) { return ops::sub(x, y); });
    binary("sub_broadcast_row", a, row, [](Var x, Var y) { return ops::sub(x, y); });
    binary("mul", a, c, [](Var x, Var y) { return ops::mul(x, y); });
    binary("mul_broadcast_row", a, row, [](Var x, Var y) { return ops::mul(x, y); });
    binary("mul_broadcast_scalar", a, one, [](Var x, Var y) { return ops::mul(x, y); });
    unary("scale", a, [](Var x) { return ops::scale(x, -1.7); });
    unary("add_scalar", a, [](Var x) { return ops::add_scalar(x, 0.3); });
    unary("sigmoid", wide, [](Var x) { return ops::sigmoid(x); });
    unary("tanh", wide, [](Var x) { return ops::tanh(x); });
    unary("relu", kinked, [](Var x) { return ops::relu(x); });
    unary("log", positive, [](Var x) { return ops::log(x); });
    unary("square", a, [](Var x) { return ops::square(x); });
    unary("clamp", clamp_in, [](Var x) { return ops::clamp(x, -0.5, 0.5); });
    binary("concat_axis0", a, c, [](Var x, Var y) {
        const std::array<Var, 2> xs{x, y};
        return ops::concat(xs, 0);
    });
    binary("concat_axis1", a, b, [](Var x, Var y) {
        const std::array<Var, 2> xs{x, ops::matmul(x, y)};
        return ops::concat(xs, 1);
    });
    unary("slice_axis0", a, [](Var x) { return ops::slice(x, 0, 1, 3); });
    unary("slice_axis1", a, [](Var x) { return ops::slice(x, 1, 1, 3); });
    unary("sum_axis0", a, [](Var x) { return ops::sum(x, 0); });
    unary("sum_axis1", a, [](Var x) { return ops::sum(x, 1); });
    unary("mean", a, [](Var x) { return ops::mean(ops::mul(x, x)); });
    unary("softmax_axis0", wide, [](Var x) { return ops::softmax(x, 0); });
    unary("softmax_axis1", wide, [](Var x) { return ops::softmax(x, 1); });
    binary("scale_rows", a, col, [](Var x, Var y) { return ops::scale_rows(x, y); });
}

// Gradients are checked at a generic point rather than at initialization: with
// zero biases and a zero initial decoder state several gradient entries are
// far below what central differences can resolve. Weights are variance
// preserving (unit gain per layer) so signals neither vanish through the
// stacked projections nor saturate the attention.
ModelParams random_point(const ModelHyper& hyper, std::mt19937_64& rng) {
    ModelParams params(hyper, synthetic_skeleton(hyper.joints), rng());
    for (Parameter* p : params.parameters()) {
        const double bound =
            p->value.rank() == 2 ? std::sqrt(3.0 / static_cast<double>(p->value.dim(0))) : 0.5;
        p->value = random_tensor(p->value.shape(), rng, -bound, bound);
    }
    return params;
}

StreamBatch random_streams(const ModelHyper& h, std::size_t tau, std::size_t batch, std::mt19937_64& rng) {
    StreamBatch sb;
    for (std::size_t t = 0; t < tau; ++t) {
        sb.position.push_back(random_tensor({batch, h.pose_dim()}, rng));
        sb.velocity.push_back(random_tensor({batch, h.pose_dim()}, rng));
        sb.acceleration.push_back(random_tensor({batch, h.pose_dim()}, rng));
    }
    return sb;
}

template <typename... Groups>
std::vector<Parameter*> join(std::vector<Parameter*> a, const Groups&... rest) {
    (a.insert(a.end(), rest.begin(), rest.end()), ...);
    return a;
}

std::vector<Parameter*> of(GruCell& c) { return {&c.w, &c.u_gates, &c.u_cand, &c.b}; }
std::vector<Parameter*> of(Linear& l) { return {&l.w, &l.b}; }
std::vector<Parameter*> of(Mlp& m) { return {&m.hidden.w, &m.hidden.b, &m.out.w, &m.out.b}; }
std::vector<Parameter*> of(MultiHeadAttention& a) {
    return {&a.wq, &a.wk, &a.wv, &a.wo, &a.flatten.w, &a.flatten.b};
}

void model_checks(Suite& s) {
    auto& rng = s.rng();
    const ModelHyper h = toy_hyper(3);
    ModelParams params = random_point(h, rng);
    const std::size_t batch = 2, d = h.hidden, n = h.pose_dim();

    Parameter x = input("x", random_tensor({batch, n}, rng));
    Parameter h0 = input("h_prev", random_tensor({batch, d}, rng));
    GruCell& cell = params.encoder.streams[0];
    s.check("gru_step", [&](Graph& g) { return weighted(g, gru_step(g, g.param(h0), g.param(x), cell), 3); },
            join(of(cell), std::vector<Parameter*>{&h0, &x}));

    std::array<Parameter, 3> tok{input("token_pos", random_tensor({batch, d}, rng)),
                                 input("token_vel", random_tensor({batch, d}, rng)),
                                 input("token_acc", random_tensor({batch, d}, rng))};
    s.check(
        "attention_fuse",
        [&](Graph& g) {
            const std::array<Var, 3> t{g.param(tok[0]), g.param(tok[1]), g.param(tok[2])};
            return weighted(g, attention_fuse(g, t, params.encoder.fuse).fused, 4);
        },
        join(of(params.encoder.fuse), std::vector<Parameter*>{&tok[0], &tok[1], &tok[2]}));

    Parameter h_att = input("h_att", random_tensor({batch, d}, rng));
    s.check(
        "latent_heads",
        [&](Graph& g) {
            const LatentVars lv = latent_heads(g, g.param(h_att), params.latent);
            return ops::add(weighted(g, lv.z, 5), weighted(g, lv.c, 6));
        },
        join(of(params.latent.z), of(params.latent.c), std::vector<Parameter*>{&h_att}));

    const StreamBatch streams = random_streams(h, 3, batch, rng);
    s.check(
        "encode",
        [&](Graph& g) {
            const EncodeResult e = encode(g, streams, params);
            return ops::add(weighted(g, e.latent.z, 7), weighted(g, e.latent.c, 8));
        },
        join(params.group(ParamGroup::encoder), params.group(ParamGroup::latent)));

    Parameter h_dec = input("h_dec", random_tensor({batch, d}, rng));
    std::vector<Parameter*> spl_params{&h_dec};
    for (auto& m : params.decoder.spl) spl_params = join(spl_params, of(m));
    s.check("spl_forward", [&](Graph& g) { return weighted(g, spl_forward(g, g.param(h_dec), params), 9); },
            spl_params);

    Parameter pose = input("pose_prev", random_tensor({batch, n}, rng));
    Parameter z = input("z", random_tensor({batch, h.latent_z}, rng));
    Parameter c_logits = input("c_logits", random_tensor({batch, h.latent_c}, rng));
    s.check(
        "decode_step",
        [&](Graph& g) {
            const LatentVars lv{g.param(z), ops::softmax(g.param(c_logits), 1)};
            const DecoderState st = decode_step(g, g.param(pose), g.param(h0), lv, params);
            return ops::add(weighted(g, st.pose, 10), weighted(g, st.hidden, 11));
        },
        join(params.group(ParamGroup::decoder), std::vector<Parameter*>{&pose, &h0, &z, &c_logits}));

    Parameter real = input("real", random_tensor({batch, h.latent_z}, rng));
    s.check(
        "disc_loss",
        [&](Graph& g) { return disc_loss(g, params.discriminators.z, g.param(real), g.param(z)); },
        join(of(params.discriminators.z), std::vector<Parameter*>{&real}));
    s.check("gen_loss", [&](Graph& g) { return gen_loss(g, params.discriminators.z, g.param(z)); }, {&z});
}

}  // namespace

ModelHyper toy_hyper(std::size_t joints) {
    ModelHyper h;
    h.joints = joints;
    h.dims = 3;
    h.hidden = 8;
    h.latent_z = 4;
    h.latent_c = 3;
    h.heads = 2;
    h.spl_hidden = 4;
    h.disc_hidden = 4;
    return h;
}

std::vector<GradCheckEntry> check_phase1_loss(const ModelHyper& hyper, std::size_t tau, std::size_t horizon,
                                              std::size_t batch_size, double lambda_adv,
                                              const GradCheckOptions& options) {
    std::mt19937_64 rng(options.seed ^ 0x7068617365ULL);
    ModelParams params = random_point(hyper, rng);
    Batch batch;
    batch.inputs = random_streams(hyper, tau, batch_size, rng);
    // Targets sit close to the model's own rollout so the loss value stays
    // small next to its gradients and the central differences are not
    // dominated by rounding in the loss.
    {
        batch.targets.assign(horizon, Tensor({batch_size, hyper.pose_dim()}));
        Graph g;
        for (std::size_t i = 0; i < kParamGroupCount; ++i) g.set_group_grad(static_cast<ParamGroup>(i), false);
        const EncodeResult enc = encode(g, batch.inputs, params);
        const auto preds = rollout(g, batch, enc.latent, params);
        for (std::size_t k = 0; k < horizon; ++k) {
            batch.targets[k] = random_tensor(batch.targets[k].shape(), rng, -0.05, 0.05);
            for (std::size_t i = 0; i < batch.targets[k].size(); ++i) batch.targets[k][i] += preds[k].value()[i];
        }
    }
    const PriorSamples prior = sample_priors(batch_size, hyper.latent_z, hyper.latent_c, rng);

    Suite s(options);
    s.check(
        "phase1_loss.reconstruction_and_regularization",
        [&](Graph& g) {
            const EncodeResult enc = encode(g, batch.inputs, params);
            const auto preds = rollout(g, batch, enc.latent, params);
            Var adv = ops::add(gen_loss(g, params.discriminators.z, enc.latent.z),
                               gen_loss(g, params.discriminators.c, enc.latent.c));
            return ops::add(rollout_loss(g, batch, preds), ops::scale(adv, lambda_adv));
        },
        join(params.group(ParamGroup::encoder), params.group(ParamGroup::latent), params.group(ParamGroup::decoder)));
    s.check(
        "phase1_loss.discriminators",
        [&](Graph& g) {
            const EncodeResult enc = encode(g, batch.inputs, params);
            return ops::add(disc_loss(g, params.discriminators.z, g.constant(prior.z), enc.latent.z),
                            disc_loss(g, params.discriminators.c, g.constant(prior.c), enc.latent.c));
        },
        params.group(ParamGroup::discriminators));
    return std::move(s.entries());
}

std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckOptions& options) {
    Suite s(options);
    op_checks(s);
    model_checks(s);
    std::vector<GradCheckEntry> out = std::move(s.entries());
    for (auto& e : check_phase1_loss(toy_hyper(3), 3, 3, 2, 1e-2, options)) {
        e.name = "toy_tau3_h3_j3." + e.name;
        out.push_back(std::move(e));
    }
    for (auto& e : check_phase1_loss(toy_hyper(2), 1, 1, 2, 1e-2, options)) {
        e.name = "toy_2frame_2joint." + e.name;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace motion
