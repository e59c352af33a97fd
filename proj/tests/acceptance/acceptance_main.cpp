// Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../smoke_setup.hpp"
#include "motion/checkpoint.hpp"
#include "motion/config.hpp"
#include "motion/evaluation.hpp"
#include "motion/gradcheck_suite.hpp"
#include "motion/model.hpp"
#include "motion/pipeline.hpp"
#include "motion/synth.hpp"

using namespace motion;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = MOTION_CONFIG_DIR;
constexpr int kSeeds = 10;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

fs::path scratch_root() { return fs::temp_directory_path() / "motion_acceptance"; }

fs::path seed_dir(int seed) { return scratch_root() / ("seed" + std::to_string(seed)); }

void run_pipeline(std::uint64_t seed, const fs::path& out) {
    ExperimentConfig config = load_config(kConfigs / "acceptance.txt");
    config.set_seed(seed);
    config.validate();
    fs::remove_all(out);
    std::ostringstream sink;
    for (const char* step : {"synth", "train", "finetune", "eval"}) {
        if (run_command(step, config, out, sink) != 0) throw std::runtime_error(std::string("step failed: ") + step);
    }
}

// Subject held out of phase 1 in config/acceptance.txt.
constexpr int kHeldOut = 2;

const EvalCurve& curve_for(const std::vector<EvalCurve>& curves, std::string_view method) {
    for (const auto& c : curves)
        if (c.method == method) return c;
    throw std::runtime_error("curve missing: " + std::string(method));
}

Outcome gradient_integrity() {
    GradCheckOptions opt;
    opt.eps = 1e-5;
    opt.tol = 1e-4;
    opt.seed = 0;
    const auto start = std::chrono::steady_clock::now();
    const auto entries = run_gradcheck_suite(opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double worst = 0.0;
    std::string worst_name, failed;
    bool has_phase1 = false;
    for (const auto& e : entries) {
        if (e.report.max_rel_error() > worst) {
            worst = e.report.max_rel_error();
            worst_name = e.name;
        }
        if (!e.report.passed() && failed.empty()) failed = e.name;
        has_phase1 = has_phase1 || e.name.find("phase1_loss") != std::string::npos;
    }
    const bool ok = failed.empty() && has_phase1 && worst < 1e-4 && secs < 60.0;
    std::string detail = fmt("%zu checks, max rel error %.3e (%s), %.1f s", entries.size(), worst, worst_name.c_str(), secs);
    if (!failed.empty()) detail += ", first failure " + failed;
    return {ok, detail};
}

Outcome metric_oracle() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> frames(1, 30), joints(1, 25);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t t = frames(rng), j = joints(rng);
        const Tensor a = random_tensor({t, j * 3}, rng, -50.0, 50.0), b = random_tensor({t, j * 3}, rng, -50.0, 50.0);
        double naive = 0.0;
        for (std::size_t f = 0; f < t; ++f) {
            double frame = 0.0;
            for (std::size_t q = 0; q < j; ++q) {
                for (std::size_t d = 0; d < 3; ++d) {
                    const double e = a(f, q * 3 + d) - b(f, q * 3 + d);
                    frame += e * e;
                }
            }
            naive += frame / static_cast<double>(j);
        }
        naive /= static_cast<double>(t);
        const double got = mse_metric(a, b, 3).total;
        worst = std::max(worst, std::abs(got - naive) / std::max(1.0, std::abs(naive)));
    }
    const double hand = mse_metric(Tensor({1, 3}, {0.0, 2.0, 0.0}), Tensor({1, 3}), 3).total;
    return {worst <= 1e-12 && hand == 4.0, fmt("100 instances, max rel diff %.2e; hand case %.17g cm^2", worst, hand)};
}

Outcome baseline_oracle() {
    SynthSpec spec;
    spec.n_subjects = 2;
    spec.n_activities = 3;
    spec.trials = 1;
    spec.frames = 60;
    const auto windows = window_sequences(synth_generate(spec), 15, 15, 7);
    bool bit_equal = true;
    for (const auto& w : windows) {
        const Tensor pred = zero_velocity_baseline(w, 15);
        for (std::size_t k = 0; k < 15; ++k)
            for (std::size_t i = 0; i < pred.cols(); ++i) bit_equal = bit_equal && pred(k, i) == w.observed(14, i);
    }

    // Constant-velocity windows: the error at step k is k^2 |v_j|^2 per joint.
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> pos(-100.0, 100.0), vel(-3.0, 3.0);
    std::vector<MotionWindow> cv(25);
    double mean_v2 = 0.0;
    for (auto& w : cv) {
        w.observed = Tensor({15, 60});
        w.target = Tensor({15, 60});
        double v2 = 0.0;
        for (std::size_t i = 0; i < 60; ++i) {
            const double p0 = pos(rng), v = vel(rng);
            v2 += v * v;
            for (std::size_t t = 0; t < 30; ++t) (t < 15 ? w.observed(t, i) : w.target(t - 15, i)) = p0 + v * t;
        }
        mean_v2 += v2 / 20.0;
    }
    mean_v2 /= static_cast<double>(cv.size());
    const EvalCurve curve = evaluate_baseline(cv, 3);
    double worst = 0.0;
    for (std::size_t k = 1; k <= 15; ++k) {
        worst = std::max(worst, std::abs(curve.per_frame[k - 1] - static_cast<double>(k * k) * mean_v2));
    }
    return {bit_equal && worst <= 1e-9,
            fmt("%zu windows bit-equal: %s; k^2 v^2 max abs diff %.2e", windows.size(), bit_equal ? "yes" : "no", worst)};
}

struct CurriculumCounts {
    int beats_phase1 = 0;
    int beats_baseline = 0;
    std::string per_seed;
};

CurriculumCounts curriculum() {
    CurriculumCounts out;
    for (int s = 0; s < kSeeds; ++s) {
        const auto curves = load_curves(seed_dir(s) / ("curves_s" + std::to_string(kHeldOut) + ".csv"));
        const EvalCurve& zv = curve_for(curves, kMethodZeroVelocity);
        const EvalCurve& p1 = curve_for(curves, kMethodPhase1);
        const EvalCurve& p2 = curve_for(curves, kMethodPhase2);
        bool a = true, b = true;
        for (std::size_t f : {8, 10, 13, 15}) a = a && p2.per_frame[f - 1] < p1.per_frame[f - 1];
        for (std::size_t f = 8; f <= 15; ++f) b = b && p2.per_frame[f - 1] < zv.per_frame[f - 1];
        out.beats_phase1 += a;
        out.beats_baseline += b;
        out.per_seed += fmt(" s%d:%.0f/%.0f/%.0f", s, zv.per_frame[7], p1.per_frame[7], p2.per_frame[7]);
    }
    return out;
}

Outcome freeze_contract() {
    int ok = 0;
    for (int s = 0; s < kSeeds; ++s) {
        const Checkpoint p1 = load_checkpoint(seed_dir(s) / "phase1.ckpt");
        const Checkpoint p2 = load_checkpoint(phase2_checkpoint_path(seed_dir(s), kHeldOut));
        bool same = true;
        for (ParamGroup g : {ParamGroup::encoder, ParamGroup::latent, ParamGroup::discriminators}) {
            same = same && group_hash(p1.params, g) == group_hash(p2.params, g) &&
                   serialize_group(p1.params, g) == serialize_group(p2.params, g);
        }
        const bool decoder_moved = group_hash(p1.params, ParamGroup::decoder) != group_hash(p2.params, ParamGroup::decoder);
        ok += same && decoder_moved;
    }
    return {ok == kSeeds, fmt("%d/%d runs: frozen groups byte-identical and decoder updated", ok, kSeeds)};
}

Outcome simplex_and_attention() {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> steps(1, 6), cats(2, 27);
    std::uniform_real_distribution<double> scale(0.1, 20.0);
    std::size_t evaluations = 0, rows = 0;
    double worst_c = 0.0, worst_att = 0.0, min_entry = 1.0;
    for (std::uint64_t m = 0; evaluations < 100000; ++m) {
        ModelHyper h = smoke::hyper();
        h.latent_c = cats(rng);
        const ModelParams params(h, default_skeleton(), m);
        const std::size_t batch = 2000, tau = steps(rng);
        const double amp = scale(rng);
        StreamBatch sb;
        for (std::size_t t = 0; t < tau; ++t) {
            sb.position.push_back(random_tensor({batch, 60}, rng, -amp, amp));
            sb.velocity.push_back(random_tensor({batch, 60}, rng, -amp, amp));
            sb.acceleration.push_back(random_tensor({batch, 60}, rng, -amp, amp));
        }
        Graph g;
        const EncodeResult r = encode(g, sb, params);
        const Tensor& c = r.latent.c.value();
        for (std::size_t b = 0; b < batch; ++b) {
            double sum = 0.0;
            for (std::size_t k = 0; k < c.cols(); ++k) {
                sum += c(b, k);
                min_entry = std::min(min_entry, c(b, k));
            }
            worst_c = std::max(worst_c, std::abs(sum - 1.0));
        }
        for (const Var& w : r.attention.weights) {
            const Tensor& a = w.value();
            for (std::size_t b = 0; b < a.rows(); ++b) {
                double sum = 0.0;
                for (std::size_t k = 0; k < a.cols(); ++k) {
                    sum += a(b, k);
                    min_entry = std::min(min_entry, a(b, k));
                }
                worst_att = std::max(worst_att, std::abs(sum - 1.0));
                ++rows;
            }
        }
        evaluations += batch;
    }
    const bool ok = worst_c <= 1e-9 && worst_att <= 1e-9 && min_entry >= 0.0;
    return {ok, fmt("%zu encodings, %zu attention rows; max |sum-1| c %.1e, attention %.1e; min entry %.1e", evaluations,
                    rows, worst_c, worst_att, min_entry)};
}

Outcome prefix_property() {
    SynthSpec spec;
    spec.n_subjects = 3;
    spec.n_activities = 3;
    spec.trials = 2;
    spec.frames = 60;
    spec.seed = 5;
    auto windows = window_sequences(synth_generate(spec), 15, 15, 1);
    std::mt19937_64 rng(5);
    std::shuffle(windows.begin(), windows.end(), rng);
    windows.resize(100);
    const NormStats stats = fit_stats(windows);
    const ModelParams params(smoke::hyper(), default_skeleton(), 5);
    int mismatches = 0;
    for (const auto& w : windows) {
        const std::array<const MotionWindow*, 1> one{&w};
        const StreamBatch sb = make_stream_batch(one, stats);
        Graph full_g;
        const auto full = predict_sequence(full_g, sb, params, 15);
        for (std::size_t k = 1; k <= 15; ++k) {
            Graph g;
            const auto part = predict_sequence(g, sb, params, k);
            for (std::size_t i = 0; i < k; ++i) mismatches += part[i].value() != full[i].value();
        }
    }
    return {mismatches == 0, fmt("100 windows x k=1..15, %d mismatched frames", mismatches)};
}

Outcome adversarial_equilibrium() {
    int ok = 0;
    std::string per_seed;
    for (int s = 0; s < kSeeds; ++s) {
        smoke::Setup setup = smoke::make(static_cast<std::uint64_t>(s));
        const Phase1Result r = train_phase1(setup.train, setup.val, setup.params, setup.stats, setup.config);
        const DiscriminatorAccuracy acc =
            discriminator_accuracy(r.params, setup.stats, setup.held_out, static_cast<std::uint64_t>(s) + 1000);
        const bool in_band = acc.z >= 0.35 && acc.z <= 0.65 && acc.c >= 0.35 && acc.c <= 0.65;
        ok += in_band;
        per_seed += fmt(" s%d:%.2f/%.2f", s, acc.z, acc.c);
    }
    return {ok >= 7, fmt("%d/%d seeds in [0.35, 0.65] (z/c):", ok, kSeeds) + per_seed};
}

Outcome determinism() {
    const fs::path again = scratch_root() / "rerun0";
    run_pipeline(0, again);
    bool same = true;
    std::string files;
    for (const char* f : {"report.csv", "curves_s2.csv"}) {
        const bool eq = read_bytes(seed_dir(0) / f) == read_bytes(again / f);
        same = same && eq;
        files += fmt(" %s:%s", f, eq ? "identical" : "DIFFERENT");
    }
    return {same, "seed 0 rerun," + files};
}

Outcome spl_structure() {
    ModelHyper h = smoke::hyper();
    const ModelParams params(h, default_skeleton(), 17);
    const SkeletonTree& tree = params.tree();
    std::mt19937_64 rng(17);
    int wrong = 0;
    for (std::size_t j = 0; j < tree.joints(); ++j) {
        Graph g;
        const Var pose = spl_forward(g, g.constant(random_tensor({1, h.hidden}, rng, -1.0, 1.0)), params);
        const Var weight = g.constant(random_tensor({1, 3}, rng, 0.5, 1.5));
        g.backward(ops::mean(ops::mul(ops::slice(pose, 1, 3 * j, 3 * j + 3), weight)));
        for (std::size_t k = 0; k < tree.joints(); ++k) {
            const bool should = k == j || tree.is_ancestor(k, j);
            const Mlp& m = params.decoder.spl[k];
            bool nonzero = false;
            for (const Parameter* p : {&m.hidden.w, &m.hidden.b, &m.out.w, &m.out.b}) {
                const Tensor grad = g.param_grad(*p);
                for (double v : grad.data()) nonzero = nonzero || v != 0.0;
            }
            wrong += nonzero != should;
        }
    }
    return {wrong == 0, fmt("%zu x %zu (joint, SPL block) pairs, %d violations", tree.joints(), tree.joints(), wrong)};
}

struct Gate {
    int failures = 0;

    void report(const std::string& id, const std::function<Outcome()>& check) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failures += !o.pass;
        std::printf("%s criterion %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
};

}  // namespace

int main() {
    Gate gate;
    gate.report("1 gradient integrity", gradient_integrity);
    gate.report("2 metric oracle", metric_oracle);
    gate.report("3 baseline oracle", baseline_oracle);

    const auto start = std::chrono::steady_clock::now();
    std::string pipeline_error;
    try {
        for (int s = 0; s < kSeeds; ++s) run_pipeline(static_cast<std::uint64_t>(s), seed_dir(s));
    } catch (const std::exception& e) {
        pipeline_error = e.what();
    }
    const double pipeline_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CurriculumCounts counts;
    if (pipeline_error.empty()) {
        try {
            counts = curriculum();
        } catch (const std::exception& e) {
            pipeline_error = e.what();
        }
    }
    gate.report("4a curriculum benefit", [&]() -> Outcome {
        if (!pipeline_error.empty()) return {false, "pipeline failed: " + pipeline_error};
        return {counts.beats_phase1 >= 8 && pipeline_secs <= 900.0,
                fmt("%d/%d seeds improve on phase 1 at frames 8,10,13,15; %d runs in %.0f s; frame 8 zv/p1/p2:",
                    counts.beats_phase1, kSeeds, kSeeds, pipeline_secs) +
                    counts.per_seed};
    });
    gate.report("4b model beats baseline", [&]() -> Outcome {
        if (!pipeline_error.empty()) return {false, "pipeline failed: " + pipeline_error};
        return {counts.beats_baseline >= 8,
                fmt("%d/%d seeds below zero-velocity at every frame 8..15", counts.beats_baseline, kSeeds)};
    });
    gate.report("5 freeze contract", freeze_contract);
    gate.report("6 simplex and attention rows", simplex_and_attention);
    gate.report("7 autoregressive prefix", prefix_property);
    gate.report("8 adversarial equilibrium", adversarial_equilibrium);
    gate.report("9 determinism", determinism);
    gate.report("10 SPL structure", spl_structure);

    std::error_code ec;
    fs::remove_all(scratch_root(), ec);
    std::printf("%s: %d criterion(s) failed\n", gate.failures == 0 ? "ACCEPTED" : "REJECTED", gate.failures);
    return gate.failures == 0 ? 0 : 1;
}
