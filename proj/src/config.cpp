#include "motion/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "motion/errors.hpp"

namespace motion {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("invalid value '" + v + "' for " + key);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean '" + v + "' for " + key + " (use true/false)");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    std::istringstream in(v);
    std::string item;
    while (in >> item) out.push_back(parse_number<T>(key, item));
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}
template <class T>
std::string fmt_int(T v) {
    return std::to_string(v);
}
std::string fmt_bool(bool v) { return v ? "true" : "false"; }
template <class T>
std::string fmt_list(const std::vector<T>& xs) {
    std::string s;
    for (const auto& x : xs) s += (s.empty() ? "" : " ") + std::to_string(x);
    return s;
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define NUM_FIELD(key, member, T)                                                                               \
    {key, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {                           \
                    c.member = parse_number<T>(k, v);                                                           \
                },                                                                                              \
                [](const ExperimentConfig& c) {                                                                 \
                    if constexpr (std::is_floating_point_v<T>) return fmt_double(c.member);                     \
                    else return fmt_int(c.member);                                                              \
                }}}

#define BOOL_FIELD(key, member)                                                                                 \
    {key, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
                [](const ExperimentConfig& c) { return fmt_bool(c.member); }}}

#define FREEZE_FIELD(key, group)                                                                                \
    {key, Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {                           \
                    c.finetune.mask.set_trainable(group, !parse_bool(k, v));                                    \
                },                                                                                              \
                [](const ExperimentConfig& c) { return fmt_bool(!c.finetune.mask.is_trainable(group)); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"seed", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                           c.set_seed(parse_number<std::uint64_t>(k, v));
                       },
                       [](const ExperimentConfig& c) { return fmt_int(c.seed); }}},
        {"data.source", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                  if (v != "synth" && v != "csv") throw ConfigError(k + " must be synth or csv");
                                  c.data_source = v;
                              },
                              [](const ExperimentConfig& c) { return c.data_source; }}},
        {"data.path", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.data_path = v; },
                            [](const ExperimentConfig& c) { return c.data_path.string(); }}},
        {"data.skeleton",
         Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.skeleton_path = v; },
               [](const ExperimentConfig& c) { return c.skeleton_path.string(); }}},
        {"data.subjects", Field{[](ExperimentConfig& c, const std::string& k,
                                   const std::string& v) { c.subjects = parse_list<int>(k, v); },
                                [](const ExperimentConfig& c) { return fmt_list(c.subjects); }}},
        NUM_FIELD("synth.subjects", synth_subjects, int),
        NUM_FIELD("synth.activities", synth_activities, int),
        NUM_FIELD("synth.trials", synth_trials, int),
        NUM_FIELD("synth.frames", synth_frames, std::size_t),
        NUM_FIELD("synth.joints", synth_joints, std::size_t),
        NUM_FIELD("synth.noise_cm", synth_noise_cm, double),
        NUM_FIELD("window.tau", tau, std::size_t),
        NUM_FIELD("window.horizon", horizon, std::size_t),
        NUM_FIELD("window.train_stride", train_stride, std::size_t),
        NUM_FIELD("window.eval_stride", eval_stride, std::size_t),
        NUM_FIELD("split.val_fraction", val_fraction, double),
        NUM_FIELD("split.finetune_trial", finetune_trial, int),
        NUM_FIELD("model.hidden", model.hidden, std::size_t),
        NUM_FIELD("model.latent_z", model.latent_z, std::size_t),
        NUM_FIELD("model.latent_c", model.latent_c, std::size_t),
        NUM_FIELD("model.heads", model.heads, std::size_t),
        NUM_FIELD("model.spl_hidden", model.spl_hidden, std::size_t),
        NUM_FIELD("model.disc_hidden", model.disc_hidden, std::size_t),
        BOOL_FIELD("model.spl_residual", model.spl_residual),
        NUM_FIELD("train.learning_rate", train.learning_rate, double),
        NUM_FIELD("train.disc_learning_rate", train.disc_learning_rate, double),
        NUM_FIELD("train.lambda_adv", train.lambda_adv, double),
        NUM_FIELD("train.batch_size", train.batch_size, std::size_t),
        NUM_FIELD("train.max_epochs", train.max_epochs, std::size_t),
        NUM_FIELD("train.patience", train.patience, std::size_t),
        NUM_FIELD("train.teacher_forcing", train.teacher_forcing, double),
        NUM_FIELD("train.beta1", train.beta1, double),
        NUM_FIELD("train.beta2", train.beta2, double),
        NUM_FIELD("train.adam_eps", train.adam_eps, double),
        NUM_FIELD("finetune.learning_rate", finetune.learning_rate, double),
        NUM_FIELD("finetune.batch_size", finetune.batch_size, std::size_t),
        NUM_FIELD("finetune.max_epochs", finetune.max_epochs, std::size_t),
        NUM_FIELD("finetune.patience", finetune.patience, std::size_t),
        NUM_FIELD("finetune.sample_budget", finetune.sample_budget, std::size_t),
        FREEZE_FIELD("freeze.encoder", ParamGroup::encoder),
        FREEZE_FIELD("freeze.latent", ParamGroup::latent),
        FREEZE_FIELD("freeze.decoder", ParamGroup::decoder),
        FREEZE_FIELD("freeze.discriminators", ParamGroup::discriminators),
        {"eval.frames", Field{[](ExperimentConfig& c, const std::string& k,
                                 const std::string& v) { c.eval_frames = parse_list<std::size_t>(k, v); },
                              [](const ExperimentConfig& c) { return fmt_list(c.eval_frames); }}},
        {"eval.mse", Field{[](ExperimentConfig& c, const std::string&, const std::string& v) {
                               c.eval_mse = parse_mse_mode(v);
                           },
                           [](const ExperimentConfig& c) { return std::string(mse_mode_name(c.eval_mse)); }}},
        {"eval.subjects", Field{[](ExperimentConfig& c, const std::string& k,
                                   const std::string& v) { c.eval_subjects = parse_list<int>(k, v); },
                                [](const ExperimentConfig& c) { return fmt_list(c.eval_subjects); }}},
        NUM_FIELD("predict.subject", predict_subject, int),
        NUM_FIELD("predict.activity", predict_activity, int),
        NUM_FIELD("predict.trial", predict_trial, int),
        NUM_FIELD("predict.start", predict_start, std::size_t),
        {"predict.model", Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                    if (v != "phase1" && v != "phase2") throw ConfigError(k + " must be phase1 or phase2");
                                    c.predict_model = v;
                                },
                                [](const ExperimentConfig& c) { return c.predict_model; }}},
        NUM_FIELD("gradcheck.eps", gradcheck_eps, double),
        NUM_FIELD("gradcheck.tol", gradcheck_tol, double),
    };
    return table;
}

#undef NUM_FIELD
#undef BOOL_FIELD
#undef FREEZE_FIELD

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
    finetune.seed = s;
}

void ExperimentConfig::validate() const {
    if (data_source == "csv" && data_path.empty()) throw ConfigError("data.path is required when data.source = csv");
    if (synth_subjects < 1 || synth_activities < 1 || synth_trials < 1 || synth_frames < 1 || synth_joints < 1) {
        throw ConfigError("synth counts must all be >= 1");
    }
    if (!(synth_noise_cm >= 0.0)) throw ConfigError("synth.noise_cm must be >= 0");
    if (tau == 0 || horizon == 0 || train_stride == 0 || eval_stride == 0) {
        throw ConfigError("window.tau, window.horizon and strides must be >= 1");
    }
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("split.val_fraction must lie in (0,1)");
    ModelHyper h = model;
    if (h.latent_c == 0) h.latent_c = 1;
    h.validate();
    train.validate();
    FinetuneConfig f = finetune;
    f.phase1_learning_rate = train.learning_rate;
    f.validate();
    if (eval_frames.empty()) throw ConfigError("eval.frames must list at least one frame");
    for (std::size_t fr : eval_frames) {
        if (fr == 0 || fr > horizon) {
            throw ConfigError("eval.frames entry " + std::to_string(fr) + " outside 1.." + std::to_string(horizon));
        }
    }
    if (!(gradcheck_eps >= 1e-7 && gradcheck_eps <= 1e-3)) throw ConfigError("gradcheck.eps must lie in [1e-7, 1e-3]");
    if (!(gradcheck_tol > 0.0)) throw ConfigError("gradcheck.tol must be > 0");
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t ln = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++ln;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(ln) + ": expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
        if (it == table.end()) throw ConfigError("line " + std::to_string(ln) + ": unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(ln) + ": duplicate key '" + key + "'");
        try {
            it->second.set(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(ln) + ": " + e.what());
        }
    }
    c.finetune.phase1_learning_rate = c.train.learning_rate;
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string format_config(const ExperimentConfig& config) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + '\n';
    return out;
}

}  // namespace motion
