#include "motion/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "motion/errors.hpp"

namespace motion {

void ModelHyper::validate() const {
    if (joints == 0 || dims == 0 || hidden == 0 || latent_z == 0 || latent_c == 0 || heads == 0 ||
        spl_hidden == 0 || disc_hidden == 0) {
        throw ConfigError("model dimensions must all be >= 1");
    }
    if (hidden % heads != 0) {
        throw ConfigError("hidden size " + std::to_string(hidden) + " is not divisible by " + std::to_string(heads) +
                          " attention heads");
    }
}

namespace {

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Parameter weight(std::string name, ParamGroup g, std::size_t in, std::size_t out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor t({in, out});
        for (double& v : t.data()) v = dist(rng_);
        return Parameter{std::move(name), g, std::move(t)};
    }

    static Parameter bias(std::string name, ParamGroup g, std::size_t out) {
        return Parameter{std::move(name), g, Tensor({out})};
    }

    Linear linear(const std::string& name, ParamGroup g, std::size_t in, std::size_t out) {
        return {weight(name + ".w", g, in, out), bias(name + ".b", g, out)};
    }

    GruCell gru(const std::string& name, ParamGroup g, std::size_t in, std::size_t h) {
        return {weight(name + ".w", g, in, 3 * h), weight(name + ".u_gates", g, h, 2 * h),
                weight(name + ".u_cand", g, h, h), bias(name + ".b", g, 3 * h)};
    }

    MultiHeadAttention attention(const std::string& name, ParamGroup g, std::size_t d, std::size_t heads,
                                 std::size_t tokens) {
        MultiHeadAttention a;
        a.wq = weight(name + ".wq", g, d, d);
        a.wk = weight(name + ".wk", g, d, d);
        a.wv = weight(name + ".wv", g, d, d);
        a.wo = weight(name + ".wo", g, d, d);
        a.flatten = linear(name + ".flatten", g, tokens * d, d);
        a.heads = heads;
        return a;
    }

    Mlp mlp(const std::string& name, ParamGroup g, std::size_t in, std::size_t hidden, std::size_t out) {
        return {linear(name + ".hidden", g, in, hidden), linear(name + ".out", g, hidden, out)};
    }

private:
    std::mt19937_64 rng_;
};

template <typename P, typename F>
void visit_linear(P& l, F& f) {
    f(l.w);
    f(l.b);
}

template <typename P, typename F>
void visit_mlp(P& m, F& f) {
    visit_linear(m.hidden, f);
    visit_linear(m.out, f);
}

template <typename P, typename F>
void visit_gru(P& c, F& f) {
    f(c.w);
    f(c.u_gates);
    f(c.u_cand);
    f(c.b);
}

template <typename P, typename F>
void visit_attention(P& a, F& f) {
    f(a.wq);
    f(a.wk);
    f(a.wv);
    f(a.wo);
    visit_linear(a.flatten, f);
}

template <typename M, typename F>
void visit_all(M& m, F&& f) {
    for (auto& s : m.encoder.streams) visit_gru(s, f);
    visit_attention(m.encoder.fuse, f);
    visit_linear(m.latent.z, f);
    visit_linear(m.latent.c, f);
    visit_linear(m.decoder.token_z, f);
    visit_linear(m.decoder.token_c, f);
    visit_linear(m.decoder.token_h, f);
    visit_attention(m.decoder.attention, f);
    visit_linear(m.decoder.context, f);
    visit_gru(m.decoder.gru, f);
    for (auto& s : m.decoder.spl) visit_mlp(s, f);
    visit_mlp(m.discriminators.z, f);
    visit_mlp(m.discriminators.c, f);
}

}  // namespace

ModelParams::ModelParams(const ModelHyper& hyper, SkeletonTree tree, std::uint64_t seed)
    : hyper_(hyper), tree_(std::move(tree)) {
    hyper_.validate();
    if (tree_.joints() != hyper_.joints) {
        throw ConfigError("skeleton has " + std::to_string(tree_.joints()) + " joints but model expects " +
                          std::to_string(hyper_.joints));
    }
    Initializer init(seed);
    const std::size_t d = hyper_.hidden, n = hyper_.pose_dim();
    static constexpr const char* kStreams[] = {"pos", "vel", "acc"};
    for (std::size_t s = 0; s < 3; ++s) {
        encoder.streams[s] = init.gru(std::string("encoder.gru_") + kStreams[s], ParamGroup::encoder, n, d);
    }
    encoder.fuse = init.attention("encoder.fuse", ParamGroup::encoder, d, hyper_.heads, 3);
    latent.z = init.linear("latent.z", ParamGroup::latent, d, hyper_.latent_z);
    latent.c = init.linear("latent.c", ParamGroup::latent, d, hyper_.latent_c);

    decoder.token_z = init.linear("decoder.token_z", ParamGroup::decoder, hyper_.latent_z, d);
    decoder.token_c = init.linear("decoder.token_c", ParamGroup::decoder, hyper_.latent_c, d);
    decoder.token_h = init.linear("decoder.token_h", ParamGroup::decoder, d, d);
    decoder.attention = init.attention("decoder.attention", ParamGroup::decoder, d, hyper_.heads, 3);
    decoder.context = init.linear("decoder.context", ParamGroup::decoder, d, d);
    decoder.gru = init.gru("decoder.gru", ParamGroup::decoder, n, d);
    for (std::size_t j = 0; j < hyper_.joints; ++j) {
        const std::size_t in = tree_.parent(j) < 0 ? d : d + hyper_.dims;
        decoder.spl.push_back(
            init.mlp("decoder.spl." + std::to_string(j), ParamGroup::decoder, in, hyper_.spl_hidden, hyper_.dims));
    }
    discriminators.z =
        init.mlp("discriminators.z", ParamGroup::discriminators, hyper_.latent_z, hyper_.disc_hidden, 1);
    discriminators.c =
        init.mlp("discriminators.c", ParamGroup::discriminators, hyper_.latent_c, hyper_.disc_hidden, 1);
}

std::vector<Parameter*> ModelParams::parameters() {
    std::vector<Parameter*> out;
    visit_all(*this, [&](Parameter& p) { out.push_back(&p); });
    return out;
}

std::vector<const Parameter*> ModelParams::parameters() const {
    std::vector<const Parameter*> out;
    visit_all(*this, [&](const Parameter& p) { out.push_back(&p); });
    return out;
}

std::vector<Parameter*> ModelParams::group(ParamGroup g) {
    std::vector<Parameter*> out;
    visit_all(*this, [&](Parameter& p) {
        if (p.group == g) out.push_back(&p);
    });
    return out;
}

std::vector<const Parameter*> ModelParams::group(ParamGroup g) const {
    std::vector<const Parameter*> out;
    visit_all(*this, [&](const Parameter& p) {
        if (p.group == g) out.push_back(&p);
    });
    return out;
}

const Parameter* ModelParams::find(std::string_view name) const {
    for (const Parameter* p : parameters()) {
        if (p->name == name) return p;
    }
    return nullptr;
}

Parameter* ModelParams::find(std::string_view name) {
    return const_cast<Parameter*>(static_cast<const ModelParams*>(this)->find(name));
}

StreamBatch make_stream_batch(std::span<const MotionWindow* const> windows, const NormStats& stats) {
    if (windows.empty()) throw DimensionError("empty batch");
    const std::size_t tau = windows.front()->observed.rows();
    const std::size_t n = windows.front()->observed.cols();
    const std::size_t b = windows.size();
    StreamBatch batch;
    batch.position.assign(tau, Tensor({b, n}));
    batch.velocity.assign(tau, Tensor({b, n}));
    batch.acceleration.assign(tau, Tensor({b, n}));
    for (std::size_t r = 0; r < b; ++r) {
        const MotionWindow& w = *windows[r];
        if (w.observed.rows() != tau || w.observed.cols() != n) throw DimensionError("ragged window batch");
        const FeatureStreams fs = derive_streams(w.observed);
        const Tensor pos = stats.position.normalize(fs.position);
        const Tensor vel = stats.velocity.normalize(fs.velocity);
        const Tensor acc = stats.acceleration.normalize(fs.acceleration);
        for (std::size_t t = 0; t < tau; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
                batch.position[t][r * n + i] = pos[t * n + i];
                batch.velocity[t][r * n + i] = vel[t * n + i];
                batch.acceleration[t][r * n + i] = acc[t * n + i];
            }
        }
    }
    return batch;
}

Var linear(Graph& g, Var x, const Linear& layer) {
    return ops::add(ops::matmul(x, g.param(layer.w)), g.param(layer.b));
}

Var gru_step(Graph& g, Var h_prev, Var x, const GruCell& cell) {
    const std::size_t h = cell.u_cand.value.dim(0);
    if (h_prev.shape().size() != 2 || h_prev.shape()[1] != h) {
        throw DimensionError("gru_step: hidden state " + shape_str(h_prev.shape()) + " does not match cell size " +
                             std::to_string(h));
    }
    Var xw = ops::add(ops::matmul(x, g.param(cell.w)), g.param(cell.b));
    Var hu = ops::matmul(h_prev, g.param(cell.u_gates));
    Var r = ops::sigmoid(ops::add(ops::slice(xw, 1, 0, h), ops::slice(hu, 1, 0, h)));
    Var u = ops::sigmoid(ops::add(ops::slice(xw, 1, h, 2 * h), ops::slice(hu, 1, h, 2 * h)));
    Var n = ops::tanh(ops::add(ops::slice(xw, 1, 2 * h, 3 * h), ops::matmul(ops::mul(r, h_prev), g.param(cell.u_cand))));
    // h' = (1 - u) * n + u * h = n + u * (h - n)
    return ops::add(n, ops::mul(u, ops::sub(h_prev, n)));
}

AttentionResult attention_fuse(Graph& g, std::span<const Var> tokens, const MultiHeadAttention& att) {
    const std::size_t n = tokens.size();
    const std::size_t d = att.wq.value.dim(0);
    const std::size_t heads = att.heads;
    if (n == 0 || d % heads != 0) throw DimensionError("attention_fuse: invalid token set or head count");
    if (att.flatten.w.value.dim(0) != n * d) throw DimensionError("attention_fuse: flatten projection expects other token count");
    for (const Var& t : tokens) {
        if (t.shape().size() != 2 || t.shape()[1] != d) {
            throw DimensionError("attention_fuse: token " + shape_str(t.shape()) + " does not have width " +
                                 std::to_string(d));
        }
    }
    const std::size_t dk = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    Var wq = g.param(att.wq), wk = g.param(att.wk), wv = g.param(att.wv), wo = g.param(att.wo);
    std::vector<Var> q, k, v;
    for (const Var& t : tokens) {
        q.push_back(ops::matmul(t, wq));
        k.push_back(ops::matmul(t, wk));
        v.push_back(ops::matmul(t, wv));
    }

    AttentionResult res;
    std::vector<std::vector<Var>> head_out(n);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t lo = h * dk, hi = lo + dk;
        std::vector<Var> qh, kh, vh;
        for (std::size_t i = 0; i < n; ++i) {
            qh.push_back(ops::slice(q[i], 1, lo, hi));
            kh.push_back(ops::slice(k[i], 1, lo, hi));
            vh.push_back(ops::slice(v[i], 1, lo, hi));
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<Var> scores;
            for (std::size_t j = 0; j < n; ++j) {
                scores.push_back(ops::scale(ops::sum(ops::mul(qh[i], kh[j]), 1), inv_sqrt));
            }
            Var w = ops::softmax(ops::concat(scores, 1), 1);
            res.weights.push_back(w);
            Var out = ops::scale_rows(vh[0], ops::slice(w, 1, 0, 1));
            for (std::size_t j = 1; j < n; ++j) out = ops::add(out, ops::scale_rows(vh[j], ops::slice(w, 1, j, j + 1)));
            head_out[i].push_back(out);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        Var joined = heads == 1 ? head_out[i][0] : ops::concat(head_out[i], 1);
        res.tokens.push_back(ops::matmul(joined, wo));
    }
    res.fused = linear(g, ops::concat(res.tokens, 1), att.flatten);
    return res;
}

LatentVars latent_heads(Graph& g, Var h_att, const LatentHeadParams& heads) {
    return {linear(g, h_att, heads.z), ops::softmax(linear(g, h_att, heads.c), 1)};
}

EncodeResult encode(Graph& g, const StreamBatch& batch, const ModelParams& params, bool keep_trajectory) {
    const std::size_t tau = batch.steps();
    if (tau == 0) throw DimensionError("encode needs at least one observed frame");
    const std::size_t b = batch.batch();
    const std::size_t d = params.hyper().hidden;
    const EncoderParams& enc = params.encoder;

    Var zeros = g.constant(Tensor({b, d}));
    std::array<Var, 3> h{zeros, zeros, zeros};
    EncodeResult res;
    for (std::size_t t = 0; t < tau; ++t) {
        h[0] = gru_step(g, h[0], g.constant(batch.position[t]), enc.streams[0]);
        h[1] = gru_step(g, h[1], g.constant(batch.velocity[t]), enc.streams[1]);
        h[2] = gru_step(g, h[2], g.constant(batch.acceleration[t]), enc.streams[2]);
        if (keep_trajectory || t + 1 == tau) {
            res.attention = attention_fuse(g, h, enc.fuse);
            EncoderState st{h[0], h[1], h[2], res.attention.fused};
            if (keep_trajectory) res.trajectory.push_back(st);
            res.final_state = st;
        }
    }
    res.latent = latent_heads(g, res.final_state.h_att, params.latent);
    return res;
}

Var spl_forward(Graph& g, Var h_dec, const ModelParams& params) {
    const SkeletonTree& tree = params.tree();
    const std::size_t joints = tree.joints();
    if (params.decoder.spl.size() != joints) throw ConfigError("SPL blocks do not match skeleton");
    std::vector<Var> out(joints);
    for (std::size_t j : tree.topological_order()) {
        const int p = tree.parent(j);
        Var in = h_dec;
        if (p >= 0) {
            const std::array<Var, 2> parts{h_dec, out[static_cast<std::size_t>(p)]};
            in = ops::concat(parts, 1);
        }
        const Mlp& mlp = params.decoder.spl[j];
        out[j] = linear(g, ops::tanh(linear(g, in, mlp.hidden)), mlp.out);
    }
    return ops::concat(out, 1);
}

Var initial_decoder_hidden(Graph& g, std::size_t batch, const ModelParams& params) {
    return g.constant(Tensor({batch, params.hyper().hidden}));
}

DecoderState decode_step(Graph& g, Var pose_prev, Var hidden_prev, const LatentVars& latent,
                         const ModelParams& params) {
    const DecoderParams& dec = params.decoder;
    if (pose_prev.shape().size() != 2 || pose_prev.shape()[1] != params.hyper().pose_dim()) {
        throw DimensionError("decode_step: pose " + shape_str(pose_prev.shape()) + " does not have width " +
                             std::to_string(params.hyper().pose_dim()));
    }
    const std::array<Var, 3> tokens{linear(g, latent.z, dec.token_z), linear(g, latent.c, dec.token_c),
                                    linear(g, hidden_prev, dec.token_h)};
    const AttentionResult att = attention_fuse(g, tokens, dec.attention);
    Var state = ops::add(hidden_prev, linear(g, att.fused, dec.context));
    Var hidden = gru_step(g, state, pose_prev, dec.gru);
    Var pose = spl_forward(g, hidden, params);
    if (params.hyper().spl_residual) pose = ops::add(pose, pose_prev);
    return {pose, hidden};
}

std::vector<Var> predict_sequence(Graph& g, const StreamBatch& batch, const ModelParams& params,
                                  std::size_t horizon) {
    const EncodeResult enc = encode(g, batch, params);
    std::vector<Var> out;
    if (horizon == 0) return out;
    DecoderState st{g.constant(batch.position.back()), initial_decoder_hidden(g, batch.batch(), params)};
    for (std::size_t k = 0; k < horizon; ++k) {
        st = decode_step(g, st.pose, st.hidden, enc.latent, params);
        out.push_back(st.pose);
    }
    return out;
}

std::vector<Tensor> predict_windows(const ModelParams& params, const NormStats& stats,
                                    std::span<const MotionWindow> windows, std::size_t horizon) {
    std::vector<Tensor> out;
    if (windows.empty()) return out;
    std::vector<const MotionWindow*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const std::size_t n = params.hyper().pose_dim();
    Graph g;
    for (std::size_t i = 0; i < kParamGroupCount; ++i) g.set_group_grad(static_cast<ParamGroup>(i), false);
    const StreamBatch batch = make_stream_batch(ptrs, stats);
    const std::vector<Var> steps = predict_sequence(g, batch, params, horizon);
    for (std::size_t r = 0; r < windows.size(); ++r) {
        if (horizon == 0) {
            out.emplace_back();
            continue;
        }
        Tensor pred({horizon, n});
        for (std::size_t k = 0; k < horizon; ++k) {
            const Tensor& v = steps[k].value();
            for (std::size_t i = 0; i < n; ++i) pred[k * n + i] = v[r * n + i];
        }
        out.push_back(stats.position.denormalize(pred));
    }
    return out;
}

Var discriminate(Graph& g, Var latent, const Mlp& disc) {
    return ops::sigmoid(linear(g, ops::tanh(linear(g, latent, disc.hidden)), disc.out));
}

}  // namespace motion
