#include "motion/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

#include "motion/adversarial.hpp"
#include "motion/checkpoint.hpp"
#include "motion/errors.hpp"
#include "motion/evaluation.hpp"
#include "motion/finetune.hpp"
#include "motion/gradcheck_suite.hpp"
#include "motion/synth.hpp"

namespace fs = std::filesystem;

namespace motion {

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void prepare_out(const ExperimentConfig& config, const fs::path& out) {
    fs::create_directories(out);
    write_text(out / "config.txt", format_config(config));
}

Checkpoint load_required(const fs::path& path, const char* producer) {
    if (!fs::exists(path)) {
        throw ConfigError("missing " + path.string() + " (run `" + producer + "` first)");
    }
    return load_checkpoint(path);
}

void require_compatible(const Checkpoint& ckpt, const ExperimentData& data) {
    if (!(ckpt.params.tree() == data.tree)) {
        throw DimensionError("checkpoint skeleton does not match the configured skeleton");
    }
}

std::string fmt(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

SkeletonTree resolve_skeleton(const ExperimentConfig& config) {
    if (!config.skeleton_path.empty()) return load_skeleton(config.skeleton_path);
    if (config.data_source == "synth") return synthetic_skeleton(config.synth_joints);
    return default_skeleton();
}

std::vector<SkeletonSequence> generate_corpus(const ExperimentConfig& config, const SkeletonTree& tree) {
    SynthSpec spec;
    spec.n_subjects = config.synth_subjects;
    spec.n_activities = config.synth_activities;
    spec.trials = config.synth_trials;
    spec.frames = config.synth_frames;
    spec.tree = tree;
    spec.seed = config.seed;
    spec.frame_noise_cm = config.synth_noise_cm;
    return synth_generate(spec);
}

ExperimentData prepare_data(const ExperimentConfig& config) {
    ExperimentData data;
    data.tree = resolve_skeleton(config);
    if (config.data_source == "csv") {
        if (!fs::exists(config.data_path)) throw ConfigError("data file not found: " + config.data_path.string());
        data.sequences = load_sequences(config.data_path, data.tree.joints());
    } else {
        data.sequences = generate_corpus(config, data.tree);
    }
    if (!config.subjects.empty()) {
        std::erase_if(data.sequences, [&](const SkeletonSequence& s) {
            return std::find(config.subjects.begin(), config.subjects.end(), s.subject_id) == config.subjects.end();
        });
    }
    if (data.sequences.empty()) throw ConfigError("corpus is empty after subject filtering");
    std::set<int> activities;
    for (const auto& s : data.sequences) activities.insert(s.activity_id);
    data.n_activities = static_cast<int>(activities.size());
    SplitOptions opt;
    opt.val_fraction = config.val_fraction;
    opt.finetune_trial = config.finetune_trial;
    opt.seed = config.seed;
    data.split = split_cross_subject(data.sequences, opt);
    return data;
}

ModelHyper resolve_hyper(const ExperimentConfig& config, const ExperimentData& data) {
    ModelHyper h = config.model;
    h.joints = data.tree.joints();
    h.dims = data.sequences.front().dims;
    if (h.latent_c == 0) h.latent_c = static_cast<std::size_t>(data.n_activities);
    h.validate();
    return h;
}

std::vector<int> phase2_subjects(const ExperimentConfig& config, const ExperimentData& data) {
    std::vector<int> out;
    if (config.eval_subjects.empty()) {
        for (const auto& [s, _] : data.split.phase2) out.push_back(s);
        return out;
    }
    for (int s : config.eval_subjects) {
        if (!data.split.phase2.count(s)) {
            throw ConfigError("eval.subjects lists subject " + std::to_string(s) + ", which is not in the phase-2 pool");
        }
        out.push_back(s);
    }
    return out;
}

fs::path phase2_checkpoint_path(const fs::path& out, int subject) {
    return out / ("phase2_s" + std::to_string(subject) + ".ckpt");
}

int cmd_synth(const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    prepare_out(config, out);
    const SkeletonTree tree = resolve_skeleton(config);
    const auto seqs = generate_corpus(config, tree);
    save_sequences(out / "corpus.csv", seqs);
    save_skeleton(out / "skeleton.txt", tree);
    msg << "wrote " << seqs.size() << " sequences to " << (out / "corpus.csv").string() << '\n';
    return 0;
}

int cmd_train(const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    prepare_out(config, out);
    const ExperimentData data = prepare_data(config);
    const auto train = window_sequences(data.split.phase1_train, config.tau, config.horizon, config.train_stride);
    const auto val = window_sequences(data.split.phase1_val, config.tau, config.horizon, config.train_stride);
    if (train.empty() || val.empty()) throw ConfigError("phase-1 split yields no windows; sequences too short?");
    const NormStats stats = fit_stats(train);
    ModelParams params(resolve_hyper(config, data), data.tree, config.seed);

    msg << "phase 1: " << train.size() << " training windows, " << val.size() << " validation windows\n";
    Phase1Result res = train_phase1(train, val, std::move(params), stats, config.train);
    Checkpoint ckpt{std::move(res.params), stats,
                    {{"phase", "1"}, {"seed", std::to_string(config.seed)},
                     {"best_epoch", std::to_string(res.log.best_epoch)}}};
    save_checkpoint(out / "phase1.ckpt", ckpt);
    save_skeleton(out / "skeleton.txt", data.tree);
    write_train_log(out / "phase1_log.csv", res.log);
    msg << "phase 1: " << res.log.epochs.size() << " epochs, best epoch " << res.log.best_epoch
        << ", best validation loss " << fmt(res.log.best_recon_val) << '\n';
    return 0;
}

int cmd_finetune(const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    prepare_out(config, out);
    const ExperimentData data = prepare_data(config);
    const Checkpoint base = load_required(out / "phase1.ckpt", "train");
    require_compatible(base, data);

    for (int subject : phase2_subjects(config, data)) {
        const auto& seqs = data.split.phase2.at(subject).finetune;
        const auto windows = window_sequences(seqs, config.tau, config.horizon, config.train_stride);
        FinetuneConfig fc = config.finetune;
        fc.phase1_learning_rate = config.train.learning_rate;
        fc.seed = config.finetune.seed + static_cast<std::uint64_t>(subject);
        Phase2Result res = train_phase2(base.params, base.stats, windows, fc);
        Checkpoint ckpt{std::move(res.params), base.stats,
                        {{"phase", "2"}, {"subject", std::to_string(subject)}, {"seed", std::to_string(config.seed)},
                         {"best_epoch", std::to_string(res.log.best_epoch)}}};
        save_checkpoint(phase2_checkpoint_path(out, subject), ckpt);
        write_train_log(out / ("phase2_s" + std::to_string(subject) + "_log.csv"), res.log);
        msg << "phase 2 subject " << subject << ": " << windows.size() << " windows, best epoch " << res.log.best_epoch
            << '\n';
    }
    return 0;
}

int cmd_eval(const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    prepare_out(config, out);
    const ExperimentData data = prepare_data(config);
    const Checkpoint p1 = load_required(out / "phase1.ckpt", "train");
    require_compatible(p1, data);

    std::vector<ReportRow> rows;
    for (int subject : phase2_subjects(config, data)) {
        const Checkpoint p2 = load_required(phase2_checkpoint_path(out, subject), "finetune");
        require_compatible(p2, data);
        const auto windows =
            window_sequences(data.split.phase2.at(subject).test, config.tau, config.horizon, config.eval_stride);
        if (windows.empty()) throw ConfigError("no test windows for subject " + std::to_string(subject));
        const std::vector<EvalCurve> curves{
            evaluate_baseline(windows, data.sequences.front().dims, config.eval_mse),
            evaluate_model(std::string(kMethodPhase1), p1.params, p1.stats, windows, config.eval_mse),
            evaluate_model(std::string(kMethodPhase2), p2.params, p2.stats, windows, config.eval_mse)};
        for (const auto& c : curves) {
            const auto r = report_rows(subject, c, config.eval_frames, config.seed);
            rows.insert(rows.end(), r.begin(), r.end());
        }
        save_curves(out / ("curves_s" + std::to_string(subject) + ".csv"), curves);
        msg << "subject " << subject << ": " << windows.size() << " test windows\n";
    }
    save_report(out / "report.csv", rows);
    msg << "wrote " << (out / "report.csv").string() << '\n';
    return 0;
}

int cmd_compare(const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    prepare_out(config, out);
    const fs::path report = out / "report.csv";
    if (!fs::exists(report)) throw ConfigError("missing " + report.string() + " (run `eval` first)");
    const auto rows = load_report(report);
    const CompareTable table = compare_table(rows);
    write_text(out / "table.txt", table.text);
    save_report(out / "table.csv", table.rows);
    msg << table.text;
    return 0;
}

int cmd_predict(const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    prepare_out(config, out);
    const ExperimentData data = prepare_data(config);
    const fs::path ckpt_path = config.predict_model == "phase1" ? out / "phase1.ckpt"
                                                               : phase2_checkpoint_path(out, config.predict_subject);
    const Checkpoint ckpt = load_required(ckpt_path, config.predict_model == "phase1" ? "train" : "finetune");
    require_compatible(ckpt, data);

    const auto it = std::find_if(data.sequences.begin(), data.sequences.end(), [&](const SkeletonSequence& s) {
        return s.subject_id == config.predict_subject && s.activity_id == config.predict_activity &&
               s.trial_id == config.predict_trial;
    });
    if (it == data.sequences.end()) throw ConfigError("predict: no sequence with the requested subject/activity/trial");
    if (config.predict_start + config.tau + config.horizon > it->frames()) {
        throw ConfigError("predict: window starting at frame " + std::to_string(config.predict_start) +
                          " does not fit in a sequence of " + std::to_string(it->frames()) + " frames");
    }
    const std::array<SkeletonSequence, 1> one{*it};
    const auto all = window_sequences(one, config.tau, config.horizon, 1);
    const MotionWindow& w = all[config.predict_start];
    const std::array<MotionWindow, 1> windows{w};
    const Tensor pred = predict_windows(ckpt.params, ckpt.stats, windows, config.horizon).front();
    const Tensor zv = zero_velocity_baseline(w, config.horizon);

    std::string text = "kind,frame_index";
    for (std::size_t j = 1; j <= it->joints; ++j) {
        text += ",x" + std::to_string(j) + ",y" + std::to_string(j) + ",z" + std::to_string(j);
    }
    text += '\n';
    auto emit = [&](const char* kind, const Tensor& t, std::size_t first_frame) {
        for (std::size_t r = 0; r < t.rows(); ++r) {
            text += std::string(kind) + ',' + std::to_string(first_frame + r);
            for (std::size_t c = 0; c < t.cols(); ++c) text += ',' + fmt(t(r, c));
            text += '\n';
        }
    };
    const std::size_t first = config.predict_start + 1;
    emit("observed", w.observed, first);
    emit("target", w.target, first + config.tau);
    emit("predicted", pred, first + config.tau);
    emit("zero_velocity", zv, first + config.tau);
    const fs::path path = out / ("predict_s" + std::to_string(config.predict_subject) + "_a" +
                                 std::to_string(config.predict_activity) + "_t" + std::to_string(config.predict_trial) +
                                 "_f" + std::to_string(config.predict_start) + ".csv");
    write_text(path, text);
    const MseResult m = mse_metric(pred, w.target, it->dims, config.eval_mse);
    msg << "wrote " << path.string() << " (window MSE " << fmt(m.total) << " cm^2)\n";
    return 0;
}

int cmd_gradcheck(const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    prepare_out(config, out);
    GradCheckOptions opt;
    opt.eps = config.gradcheck_eps;
    opt.tol = config.gradcheck_tol;
    opt.seed = config.seed;
    const auto entries = run_gradcheck_suite(opt);
    bool ok = true;
    for (const auto& e : entries) {
        const bool pass = e.report.passed();
        ok = ok && pass;
        msg << std::left << std::setw(58) << e.name << " max_rel_error " << std::scientific << std::setprecision(3)
            << e.report.max_rel_error() << std::defaultfloat << (pass ? "  ok" : "  FAIL in " + e.report.first_failure())
            << '\n';
    }
    msg << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (" << entries.size() << " checks, tol " << opt.tol
        << ")\n";
    return ok ? 0 : 2;
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"synth", "train", "finetune", "eval", "compare", "predict", "gradcheck"};
    return names;
}

int run_command(const std::string& command, const ExperimentConfig& config, const fs::path& out, std::ostream& msg) {
    if (command == "synth") return cmd_synth(config, out, msg);
    if (command == "train") return cmd_train(config, out, msg);
    if (command == "finetune") return cmd_finetune(config, out, msg);
    if (command == "eval") return cmd_eval(config, out, msg);
    if (command == "compare") return cmd_compare(config, out, msg);
    if (command == "predict") return cmd_predict(config, out, msg);
    if (command == "gradcheck") return cmd_gradcheck(config, out, msg);
    throw ConfigError("unknown command '" + command + "'");
}

}  // namespace motion
