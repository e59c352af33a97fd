#include "motion/training.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include "motion/errors.hpp"

namespace motion {

Var recon_loss(Var predicted, Var target) {
    if (predicted.shape() != target.shape()) {
        throw DimensionError("recon_loss: " + shape_str(predicted.shape()) + " vs " + shape_str(target.shape()));
    }
    return ops::mean(ops::square(ops::sub(predicted, target)));
}

double recon_loss(const Tensor& predicted, const Tensor& target) {
    if (predicted.shape() != target.shape()) {
        throw DimensionError("recon_loss: " + shape_str(predicted.shape()) + " vs " + shape_str(target.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predicted.size());
}

namespace {

void append_number(std::string& out, double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

void append_optional(std::string& out, const std::optional<double>& v) {
    out += ',';
    if (v) append_number(out, *v);
}

}  // namespace

void write_train_log(const std::filesystem::path& path, const TrainLog& log, bool include_wall_time) {
    std::string text = "epoch,recon_train,recon_val,disc_z,disc_c,gen_z,gen_c,wall_time_s\n";
    for (const auto& e : log.epochs) {
        text += std::to_string(e.epoch) + ',';
        append_number(text, e.recon_train);
        text += ',';
        append_number(text, e.recon_val);
        append_optional(text, e.disc_z);
        append_optional(text, e.disc_c);
        append_optional(text, e.gen_z);
        append_optional(text, e.gen_c);
        text += ',';
        if (include_wall_time) append_number(text, e.wall_time_s);
        text += '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

Batch make_batch(std::span<const MotionWindow* const> windows, const NormStats& stats) {
    Batch b;
    b.inputs = make_stream_batch(windows, stats);
    const std::size_t horizon = windows.front()->target.rows();
    const std::size_t n = windows.front()->target.cols();
    b.targets.assign(horizon, Tensor({windows.size(), n}));
    for (std::size_t r = 0; r < windows.size(); ++r) {
        if (windows[r]->target.rows() != horizon) throw DimensionError("ragged target horizon in batch");
        const Tensor t = stats.position.normalize(windows[r]->target);
        for (std::size_t k = 0; k < horizon; ++k) {
            std::copy_n(&t[k * n], n, &b.targets[k][r * n]);
        }
    }
    return b;
}

std::vector<Var> rollout(Graph& g, const Batch& batch, const LatentVars& latent, const ModelParams& params,
                         double teacher_forcing, std::mt19937_64* rng) {
    std::vector<Var> out;
    DecoderState st{g.constant(batch.inputs.position.back()),
                    initial_decoder_hidden(g, batch.inputs.batch(), params)};
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::size_t k = 0; k < batch.targets.size(); ++k) {
        Var pose_in = st.pose;
        if (k > 0 && teacher_forcing > 0.0 && rng != nullptr && coin(*rng) < teacher_forcing) {
            pose_in = g.constant(batch.targets[k - 1]);
        }
        st = decode_step(g, pose_in, st.hidden, latent, params);
        out.push_back(st.pose);
    }
    return out;
}

Var rollout_loss(Graph& g, const Batch& batch, std::span<const Var> predictions) {
    std::vector<Var> targets;
    for (const auto& t : batch.targets) targets.push_back(g.constant(t));
    return recon_loss(ops::concat(predictions, 0), ops::concat(targets, 0));
}

double evaluate_recon(const ModelParams& params, const NormStats& stats, std::span<const MotionWindow> windows,
                      std::size_t batch_size) {
    if (windows.empty()) throw ConfigError("evaluate_recon on zero windows");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t lo = 0; lo < windows.size(); lo += batch_size) {
        const std::size_t hi = std::min(windows.size(), lo + batch_size);
        std::vector<const MotionWindow*> ptrs;
        for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&windows[i]);
        const Batch batch = make_batch(ptrs, stats);
        Graph g;
        for (std::size_t i = 0; i < kParamGroupCount; ++i) g.set_group_grad(static_cast<ParamGroup>(i), false);
        const EncodeResult enc = encode(g, batch.inputs, params);
        const auto preds = rollout(g, batch, enc.latent, params);
        total += rollout_loss(g, batch, preds).value().item() * static_cast<double>(hi - lo);
        count += hi - lo;
    }
    return total / static_cast<double>(count);
}

std::vector<std::vector<const MotionWindow*>> shuffled_batches(std::span<const MotionWindow> windows,
                                                               std::size_t batch_size, std::mt19937_64& rng) {
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<const MotionWindow*>> batches;
    for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
        std::vector<const MotionWindow*> b;
        for (std::size_t i = lo; i < std::min(order.size(), lo + batch_size); ++i) b.push_back(&windows[order[i]]);
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace motion
