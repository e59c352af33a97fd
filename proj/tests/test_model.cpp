#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "motion/errors.hpp"
#include "motion/model.hpp"
#include "motion/synth.hpp"
#include "test_util.hpp"

using namespace motion;
using test_util::random_tensor;

namespace {

ModelHyper small_hyper(std::size_t joints = 20) {
    ModelHyper h;
    h.joints = joints;
    h.hidden = 8;
    h.latent_z = 4;
    h.latent_c = 3;
    h.heads = 2;
    h.spl_hidden = 4;
    h.disc_hidden = 4;
    return h;
}

struct Fixture {
    ModelParams params;
    NormStats stats;
    std::vector<MotionWindow> windows;
};

Fixture make_fixture(std::uint64_t seed, std::size_t horizon = 15) {
    SynthSpec spec;
    spec.n_subjects = 2;
    spec.n_activities = 3;
    spec.trials = 1;
    spec.frames = 15 + horizon + 10;
    spec.seed = seed;
    const auto seqs = synth_generate(spec);
    Fixture f{ModelParams(small_hyper(), default_skeleton(), seed), {}, window_sequences(seqs, 15, horizon, 5)};
    f.stats = fit_stats(f.windows);
    return f;
}

void zero(Parameter& p) { p.value = Tensor(p.value.shape()); }

}  // namespace

TEST(ModelParams, HyperValidation) {
    ModelHyper h = small_hyper();
    h.heads = 3;
    EXPECT_THROW(h.validate(), ConfigError);
    h = small_hyper();
    h.latent_c = 0;
    EXPECT_THROW(h.validate(), ConfigError);
    EXPECT_THROW(ModelParams(small_hyper(5), default_skeleton(), 0), ConfigError);
}

TEST(ModelParams, FourGroupsPartitionEveryTensor) {
    ModelParams p(small_hyper(), default_skeleton(), 1);
    std::size_t in_groups = 0;
    for (std::size_t g = 0; g < kParamGroupCount; ++g) {
        const auto group = p.group(static_cast<ParamGroup>(g));
        EXPECT_FALSE(group.empty());
        for (const Parameter* q : group) {
            EXPECT_EQ(q->name.substr(0, q->name.find('.')), group_name(static_cast<ParamGroup>(g)));
        }
        in_groups += group.size();
    }
    const auto all = p.parameters();
    EXPECT_EQ(in_groups, all.size());
    std::set<std::string> names;
    for (const Parameter* q : all) EXPECT_TRUE(names.insert(q->name).second) << q->name;
    EXPECT_EQ(p.decoder.spl.size(), 20u);
    EXPECT_NE(p.find("decoder.spl.0.hidden.w"), nullptr);
}

TEST(ModelParams, SeededUniformFanInInit) {
    const ModelParams a(small_hyper(), default_skeleton(), 7);
    const ModelParams b(small_hyper(), default_skeleton(), 7);
    const ModelParams c(small_hyper(), default_skeleton(), 8);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i]->value, pb[i]->value);
        any_diff = any_diff || pa[i]->value != pc[i]->value;
        const Tensor& v = pa[i]->value;
        EXPECT_TRUE(v.all_finite());
        if (v.shape().size() == 1) {
            for (double x : v.data()) EXPECT_EQ(x, 0.0) << pa[i]->name;
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(v.dim(0)));
            for (double x : v.data()) EXPECT_LE(std::abs(x), bound) << pa[i]->name;
        }
    }
    EXPECT_TRUE(any_diff);
}

TEST(Gru, ZeroWeightsClosedForm) {
    GruCell cell{{"w", ParamGroup::encoder, Tensor({3, 6})},
                 {"ug", ParamGroup::encoder, Tensor({2, 4})},
                 {"uc", ParamGroup::encoder, Tensor({2, 2})},
                 {"b", ParamGroup::encoder, Tensor({6})}};
    Graph g;
    const Var h = gru_step(g, g.constant(Tensor::matrix({{1, 1}})), g.constant(Tensor::matrix({{0.3, -2, 5}})), cell);
    EXPECT_EQ(h.value(), Tensor::matrix({{0.5, 0.5}}));
}

TEST(Gru, StateStaysBoundedAndFinite) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        GruCell cell{{"w", ParamGroup::encoder, random_tensor({3, 9}, rng, -3, 3)},
                     {"ug", ParamGroup::encoder, random_tensor({3, 6}, rng, -3, 3)},
                     {"uc", ParamGroup::encoder, random_tensor({3, 3}, rng, -3, 3)},
                     {"b", ParamGroup::encoder, random_tensor({9}, rng)}};
        Graph g;
        Var h = g.constant(Tensor({1, 3}));
        for (int t = 0; t < 30; ++t) {
            h = gru_step(g, h, g.constant(random_tensor({1, 3}, rng, -5, 5)), cell);
            for (double v : h.value().data()) {
                ASSERT_TRUE(std::isfinite(v));
                ASSERT_LE(std::abs(v), 1.0);
            }
        }
    }
    GruCell cell{{"w", ParamGroup::encoder, Tensor({3, 6})},
                 {"ug", ParamGroup::encoder, Tensor({2, 4})},
                 {"uc", ParamGroup::encoder, Tensor({2, 2})},
                 {"b", ParamGroup::encoder, Tensor({6})}};
    Graph g;
    EXPECT_THROW(gru_step(g, g.constant(Tensor({1, 3})), g.constant(Tensor({1, 3})), cell), DimensionError);
}

TEST(Attention, IdenticalTokensGiveUniformWeights) {
    const ModelParams p(small_hyper(), default_skeleton(), 2);
    std::mt19937_64 rng(5);
    Graph g;
    const Var t = g.constant(random_tensor({4, 8}, rng));
    const std::array<Var, 3> tokens{t, t, t};
    const AttentionResult r = attention_fuse(g, tokens, p.encoder.fuse);
    ASSERT_EQ(r.weights.size(), 2u * 3u);
    for (const Var& w : r.weights)
        for (double v : w.value().data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Attention, RowsAreStochastic) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const ModelParams p(small_hyper(), default_skeleton(), static_cast<std::uint64_t>(trial));
        Graph g;
        const std::array<Var, 3> tokens{g.constant(random_tensor({5, 8}, rng, -4, 4)),
                                        g.constant(random_tensor({5, 8}, rng, -4, 4)),
                                        g.constant(random_tensor({5, 8}, rng, -4, 4))};
        const AttentionResult r = attention_fuse(g, tokens, p.encoder.fuse);
        for (const Var& w : r.weights) {
            ASSERT_EQ(w.shape(), (Shape{5, 3}));
            for (std::size_t b = 0; b < 5; ++b) {
                double s = 0.0;
                for (std::size_t j = 0; j < 3; ++j) {
                    EXPECT_GE(w.value()(b, j), 0.0);
                    s += w.value()(b, j);
                }
                EXPECT_NEAR(s, 1.0, 1e-9);
            }
        }
    }
}

TEST(Attention, SwappingTokensWithTheirFlattenBlocksIsInvariant) {
    std::mt19937_64 rng(7);
    ModelParams p(small_hyper(), default_skeleton(), 3);
    const Tensor a = random_tensor({2, 8}, rng), b = random_tensor({2, 8}, rng), c = random_tensor({2, 8}, rng);
    Graph g1;
    const std::array<Var, 3> t1{g1.constant(a), g1.constant(b), g1.constant(c)};
    const Tensor before = attention_fuse(g1, t1, p.encoder.fuse).fused.value();

    MultiHeadAttention swapped = p.encoder.fuse;
    Tensor& w = swapped.flatten.w.value;
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t col = 0; col < w.cols(); ++col) std::swap(w(8 + r, col), w(16 + r, col));
    Graph g2;
    const std::array<Var, 3> t2{g2.constant(a), g2.constant(c), g2.constant(b)};
    const Tensor after = attention_fuse(g2, t2, swapped).fused.value();
    test_util::expect_near(after, before, 1e-12);
}

TEST(Encode, SimplexLatentAndDeterminism) {
    Fixture f = make_fixture(1);
    std::vector<const MotionWindow*> ptrs;
    for (const auto& w : f.windows) ptrs.push_back(&w);
    const StreamBatch batch = make_stream_batch(ptrs, f.stats);
    EXPECT_EQ(batch.steps(), 15u);
    EXPECT_EQ(batch.batch(), f.windows.size());
    Graph g1, g2;
    const EncodeResult r1 = encode(g1, batch, f.params, true);
    const EncodeResult r2 = encode(g2, batch, f.params);
    EXPECT_EQ(r1.latent.z.value(), r2.latent.z.value());
    EXPECT_EQ(r1.latent.c.value(), r2.latent.c.value());
    EXPECT_EQ(r1.trajectory.size(), 15u);
    EXPECT_EQ(r1.final_state.h_att.shape(), (Shape{batch.batch(), 8}));
    const Tensor& c = r1.latent.c.value();
    for (std::size_t b = 0; b < c.rows(); ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < c.cols(); ++k) {
            EXPECT_GE(c(b, k), 0.0);
            s += c(b, k);
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Encode, SingleConstantFrameAndRepeatedFramesDiffer) {
    const ModelParams p(small_hyper(), default_skeleton(), 4);
    std::mt19937_64 rng(8);
    const Tensor frame = random_tensor({1, 60}, rng);
    StreamBatch one{{frame}, {Tensor({1, 60})}, {Tensor({1, 60})}};
    StreamBatch two{{frame, frame}, {Tensor({1, 60}), Tensor({1, 60})}, {Tensor({1, 60}), Tensor({1, 60})}};
    Graph g1, g2, g3;
    const EncodeResult a = encode(g1, one, p), a2 = encode(g2, one, p), b = encode(g3, two, p);
    EXPECT_EQ(a.final_state.h_att.value(), a2.final_state.h_att.value());
    EXPECT_NE(a.final_state.h_att.value(), b.final_state.h_att.value());
    double s = 0.0;
    for (double v : a.latent.c.value().data()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
    StreamBatch empty;
    Graph g4;
    EXPECT_THROW(encode(g4, empty, p), DimensionError);
}

TEST(Decoder, ZeroDecoderIsFixedPointAtSplOfZeroState) {
    ModelParams p(small_hyper(), default_skeleton(), 5);
    for (Parameter* q : p.group(ParamGroup::decoder)) {
        if (q->name.rfind("decoder.spl.", 0) != 0) zero(*q);
    }
    std::mt19937_64 rng(9);
    Graph g;
    const LatentVars latent{g.constant(random_tensor({2, 4}, rng)),
                            ops::softmax(g.constant(random_tensor({2, 3}, rng)), 1)};
    const Var spl_at_zero = spl_forward(g, g.constant(Tensor({2, 8})), p);
    DecoderState st{g.constant(random_tensor({2, 60}, rng)), initial_decoder_hidden(g, 2, p)};
    for (int k = 0; k < 4; ++k) {
        st = decode_step(g, st.pose, st.hidden, latent, p);
        EXPECT_EQ(st.hidden.value(), Tensor({2, 8}));
        EXPECT_EQ(st.pose.value(), spl_at_zero.value());
    }
}

TEST(Decoder, LatentConditionsOutput) {
    const ModelParams p(small_hyper(), default_skeleton(), 6);
    std::mt19937_64 rng(10);
    const Tensor pose = random_tensor({1, 60}, rng);
    const Tensor z = random_tensor({1, 4}, rng);
    Tensor z2 = z;
    z2[0] += 0.5;
    const Tensor c = Tensor::matrix({{0.2, 0.3, 0.5}});
    Graph g;
    const Var h0 = initial_decoder_hidden(g, 1, p);
    const DecoderState a = decode_step(g, g.constant(pose), h0, {g.constant(z), g.constant(c)}, p);
    const DecoderState b = decode_step(g, g.constant(pose), h0, {g.constant(z2), g.constant(c)}, p);
    EXPECT_NE(a.pose.value(), b.pose.value());
    EXPECT_THROW(decode_step(g, g.constant(Tensor({1, 59})), h0, {g.constant(z), g.constant(c)}, p), DimensionError);
}

TEST(Spl, ZeroWeightsGiveBiases) {
    ModelParams p(small_hyper(), default_skeleton(), 7);
    std::mt19937_64 rng(11);
    Tensor expected({1, 60});
    for (std::size_t j = 0; j < 20; ++j) {
        Mlp& m = p.decoder.spl[j];
        zero(m.hidden.w);
        zero(m.out.w);
        m.hidden.b.value = random_tensor(m.hidden.b.value.shape(), rng);
        m.out.b.value = random_tensor({3}, rng);
        for (std::size_t k = 0; k < 3; ++k) expected[j * 3 + k] = m.out.b.value[k];
    }
    Graph g;
    EXPECT_EQ(spl_forward(g, g.constant(random_tensor({1, 8}, rng)), p).value(), expected);
}

TEST(Spl, DependencyFollowsSkeletonTree) {
    const ModelParams p(small_hyper(), default_skeleton(), 8);
    const SkeletonTree& tree = p.tree();
    std::mt19937_64 rng(12);
    const Tensor h = random_tensor({1, 8}, rng);
    for (std::size_t j = 0; j < 20; ++j) {
        Graph g;
        const Var pose = spl_forward(g, g.constant(h), p);
        g.backward(ops::mean(ops::mul(ops::slice(pose, 1, 3 * j, 3 * j + 3), g.constant(random_tensor({1, 3}, rng)))));
        for (std::size_t k = 0; k < 20; ++k) {
            const bool should_depend = k == j || tree.is_ancestor(k, j);
            const Mlp& m = p.decoder.spl[k];
            bool any_nonzero = false;
            for (const Parameter* q : {&m.hidden.w, &m.hidden.b, &m.out.w, &m.out.b}) {
                const Tensor grad = g.param_grad(*q);
                for (double v : grad.data()) any_nonzero = any_nonzero || v != 0.0;
            }
            EXPECT_EQ(any_nonzero, should_depend) << "joint " << j << ", SPL block " << k;
        }
    }
}

TEST(Spl, RootInputReachesDescendants) {
    const ModelParams p(small_hyper(), default_skeleton(), 9);
    std::mt19937_64 rng(13);
    const Tensor h = random_tensor({1, 8}, rng);
    ModelParams q = p;
    q.decoder.spl[p.tree().root()].out.b.value[0] += 0.3;
    Graph g;
    const Tensor a = spl_forward(g, g.constant(h), p).value();
    const Tensor b = spl_forward(g, g.constant(h), q).value();
    for (std::size_t j = 0; j < 20; ++j) {
        bool changed = false;
        for (std::size_t k = 0; k < 3; ++k) changed = changed || a[j * 3 + k] != b[j * 3 + k];
        EXPECT_TRUE(changed) << j;
    }
    // A leaf's parameters never move its ancestors.
    const std::size_t leaf = 3;  // head
    ASSERT_TRUE(p.tree().is_ancestor(2, leaf));
    ModelParams r = p;
    r.decoder.spl[leaf].out.b.value[1] += 0.3;
    const Tensor c = spl_forward(g, g.constant(h), r).value();
    for (std::size_t j = 0; j < 20; ++j) {
        for (std::size_t k = 0; k < 3; ++k) {
            if (j != leaf) EXPECT_EQ(c[j * 3 + k], a[j * 3 + k]) << j;
        }
    }
}

TEST(Predict, PrefixPropertyIsBitExact) {
    Fixture f = make_fixture(2);
    std::vector<const MotionWindow*> ptrs;
    for (const auto& w : f.windows) ptrs.push_back(&w);
    const StreamBatch batch = make_stream_batch(ptrs, f.stats);
    Graph full_g;
    const auto full = predict_sequence(full_g, batch, f.params, 15);
    ASSERT_EQ(full.size(), 15u);
    for (std::size_t k = 0; k <= 15; ++k) {
        Graph g;
        const auto part = predict_sequence(g, batch, f.params, k);
        ASSERT_EQ(part.size(), k);
        for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(part[i].value(), full[i].value()) << "k=" << k << " i=" << i;
    }
}

TEST(Predict, WindowsInCentimetersAndDeterministic) {
    Fixture f = make_fixture(3);
    const auto a = predict_windows(f.params, f.stats, f.windows, 15);
    const auto b = predict_windows(f.params, f.stats, f.windows, 15);
    ASSERT_EQ(a.size(), f.windows.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].shape(), (Shape{15, 60}));
        EXPECT_EQ(a[i], b[i]);
    }
    // Normalized outputs are O(1); after denormalization they sit near the corpus positions.
    double mean_abs = 0.0;
    for (double v : a[0].data()) mean_abs += std::abs(v);
    EXPECT_GT(mean_abs / static_cast<double>(a[0].size()), 5.0);
    EXPECT_TRUE(predict_windows(f.params, f.stats, std::span<const MotionWindow>{}, 15).empty());
}

TEST(Discriminator, OutputStrictlyInsideUnitInterval) {
    const ModelParams p(small_hyper(), default_skeleton(), 10);
    std::mt19937_64 rng(14);
    Graph g;
    const Var d = discriminate(g, g.constant(random_tensor({50, 4}, rng, -20, 20)), p.discriminators.z);
    ASSERT_EQ(d.shape(), (Shape{50, 1}));
    for (double v : d.value().data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}
