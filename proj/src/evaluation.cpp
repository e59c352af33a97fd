#include "motion/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "motion/errors.hpp"

namespace motion {

std::string_view mse_mode_name(MseMode m) { return m == MseMode::joint_l2 ? "joint_l2" : "coordinate_mean"; }

MseMode parse_mse_mode(std::string_view name) {
    if (name == "joint_l2") return MseMode::joint_l2;
    if (name == "coordinate_mean") return MseMode::coordinate_mean;
    throw ConfigError("unknown MSE mode '" + std::string(name) + "' (expected joint_l2 or coordinate_mean)");
}

MseResult mse_metric(const Tensor& pred, const Tensor& truth, std::size_t dims, MseMode mode) {
    if (pred.shape() != truth.shape() || pred.rank() != 2) {
        throw DimensionError("mse_metric: " + shape_str(pred.shape()) + " vs " + shape_str(truth.shape()));
    }
    if (dims == 0 || pred.cols() % dims != 0) {
        throw DimensionError("mse_metric: row width " + std::to_string(pred.cols()) + " is not a multiple of " +
                             std::to_string(dims));
    }
    const std::size_t frames = pred.rows(), width = pred.cols(), joints = width / dims;
    const double norm = mode == MseMode::coordinate_mean ? static_cast<double>(dims) : 1.0;
    MseResult r;
    r.per_frame.resize(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < width; ++k) {
            const double d = pred(t, k) - truth(t, k);
            acc += d * d;
        }
        r.per_frame[t] = acc / (static_cast<double>(joints) * norm);
        r.total += r.per_frame[t];
    }
    r.total /= static_cast<double>(frames);
    return r;
}

Tensor zero_velocity_baseline(const MotionWindow& window, std::size_t horizon) {
    const std::size_t n = window.observed.cols();
    const double* last = &window.observed[(window.observed.rows() - 1) * n];
    std::vector<double> out;
    out.reserve(horizon * n);
    for (std::size_t k = 0; k < horizon; ++k) out.insert(out.end(), last, last + n);
    if (horizon == 0) return Tensor();
    return Tensor({horizon, n}, std::move(out));
}

EvalCurve evaluate_predictions(std::string method, std::span<const Tensor> predictions,
                               std::span<const MotionWindow> windows, std::size_t dims, MseMode mode) {
    if (windows.empty()) throw ConfigError("evaluation needs at least one window");
    if (predictions.size() != windows.size()) throw DimensionError("prediction count differs from window count");
    EvalCurve curve{std::move(method), std::vector<double>(windows.front().target.rows(), 0.0), windows.size()};
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const MseResult r = mse_metric(predictions[w], windows[w].target, dims, mode);
        if (r.per_frame.size() != curve.per_frame.size()) throw DimensionError("ragged horizon across windows");
        for (std::size_t k = 0; k < r.per_frame.size(); ++k) curve.per_frame[k] += r.per_frame[k];
    }
    for (double& v : curve.per_frame) v /= static_cast<double>(windows.size());
    return curve;
}

EvalCurve evaluate_baseline(std::span<const MotionWindow> windows, std::size_t dims, MseMode mode) {
    std::vector<Tensor> preds;
    for (const auto& w : windows) preds.push_back(zero_velocity_baseline(w, w.target.rows()));
    return evaluate_predictions(method_label(kMethodZeroVelocity, mode), preds, windows, dims, mode);
}

EvalCurve evaluate_model(std::string method, const ModelParams& params, const NormStats& stats,
                         std::span<const MotionWindow> windows, MseMode mode) {
    if (windows.empty()) throw ConfigError("evaluation needs at least one window");
    for (const auto& w : windows) {
        if (w.observed.cols() != params.hyper().pose_dim()) {
            throw DimensionError("window pose dim " + std::to_string(w.observed.cols()) + " does not match checkpoint (" +
                                 std::to_string(params.hyper().pose_dim()) + ")");
        }
    }
    const auto preds = predict_windows(params, stats, windows, windows.front().target.rows());
    return evaluate_predictions(method_label(method, mode), preds, windows, params.hyper().dims, mode);
}

std::string method_label(std::string_view method, MseMode mode) {
    std::string label(method);
    if (mode == MseMode::coordinate_mean) label += "[coordinate_mean]";
    return label;
}

std::vector<std::size_t> default_frame_indices() { return {2, 4, 8, 10, 13, 15}; }

std::vector<ReportRow> report_rows(int subject, const EvalCurve& curve, std::span<const std::size_t> frames,
                                   std::uint64_t seed) {
    std::vector<ReportRow> rows;
    for (std::size_t f : frames) {
        if (f == 0 || f > curve.per_frame.size()) {
            throw ConfigError("frame index " + std::to_string(f) + " outside horizon 1.." +
                              std::to_string(curve.per_frame.size()));
        }
        rows.push_back({subject, curve.method, f, curve.per_frame[f - 1], curve.n_windows, seed});
    }
    return rows;
}

namespace {

constexpr std::string_view kReportHeader = "subject,method,frame_index,mse_cm2,n_windows,seed";
constexpr std::string_view kCurveHeader = "method,frame_index,mse_cm2";

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class T>
T parse_field(const std::string& s, std::size_t line, const char* what) {
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ParseError(std::string("malformed ") + what + " '" + s + "'", line);
    }
    return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::vector<std::string> read_lines(const std::filesystem::path& path, std::string_view header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    if (lines.empty() || lines.front() != header) throw ParseError("expected header '" + std::string(header) + "'", 1);
    return lines;
}

}  // namespace

void save_report(const std::filesystem::path& path, std::span<const ReportRow> rows) {
    std::string text(kReportHeader);
    text += '\n';
    for (const auto& r : rows) {
        if (r.method.find(',') != std::string::npos) throw ConfigError("method name contains a comma: " + r.method);
        text += std::to_string(r.subject) + ',' + r.method + ',' + std::to_string(r.frame_index) + ',' +
                format_double(r.mse_cm2) + ',' + std::to_string(r.n_windows) + ',' + std::to_string(r.seed) + '\n';
    }
    write_text(path, text);
}

std::vector<ReportRow> load_report(const std::filesystem::path& path) {
    const auto lines = read_lines(path, kReportHeader);
    std::vector<ReportRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::size_t ln = i + 1;
        const auto f = split_fields(lines[i]);
        if (f.size() != 6) throw ParseError("expected 6 columns, found " + std::to_string(f.size()), ln);
        ReportRow r;
        r.subject = parse_field<int>(f[0], ln, "subject");
        r.method = f[1];
        r.frame_index = parse_field<std::size_t>(f[2], ln, "frame_index");
        r.mse_cm2 = parse_field<double>(f[3], ln, "mse_cm2");
        r.n_windows = parse_field<std::size_t>(f[4], ln, "n_windows");
        r.seed = parse_field<std::uint64_t>(f[5], ln, "seed");
        if (!std::isfinite(r.mse_cm2) || r.mse_cm2 < 0.0) throw ParseError("mse_cm2 must be finite and >= 0", ln);
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_curves(const std::filesystem::path& path, std::span<const EvalCurve> curves) {
    std::string text(kCurveHeader);
    text += '\n';
    for (const auto& c : curves) {
        for (std::size_t k = 0; k < c.per_frame.size(); ++k) {
            text += c.method + ',' + std::to_string(k + 1) + ',' + format_double(c.per_frame[k]) + '\n';
        }
    }
    write_text(path, text);
}

std::vector<EvalCurve> load_curves(const std::filesystem::path& path) {
    const auto lines = read_lines(path, kCurveHeader);
    std::vector<EvalCurve> curves;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const std::size_t ln = i + 1;
        const auto f = split_fields(lines[i]);
        if (f.size() != 3) throw ParseError("expected 3 columns, found " + std::to_string(f.size()), ln);
        if (curves.empty() || curves.back().method != f[0]) curves.push_back({f[0], {}, 0});
        const auto frame = parse_field<std::size_t>(f[1], ln, "frame_index");
        if (frame != curves.back().per_frame.size() + 1) throw ParseError("frame_index out of sequence", ln);
        curves.back().per_frame.push_back(parse_field<double>(f[2], ln, "mse_cm2"));
    }
    return curves;
}

namespace {

int method_rank(const std::string& m) {
    const std::string base = m.substr(0, m.find('['));
    if (base == kMethodZeroVelocity) return 0;
    if (base == kMethodPhase1) return 1;
    if (base == kMethodPhase2) return 2;
    return 3;
}

}  // namespace

CompareTable compare_table(std::span<const ReportRow> rows) {
    if (rows.empty()) throw ConfigError("compare_table: no report rows");
    // subject -> method -> frame -> value
    std::map<int, std::map<std::string, std::map<std::size_t, const ReportRow*>>> grid;
    for (const auto& r : rows) {
        auto& slot = grid[r.subject][r.method][r.frame_index];
        if (slot != nullptr) {
            throw ConfigError("duplicate report row for subject " + std::to_string(r.subject) + ", " + r.method +
                              ", frame " + std::to_string(r.frame_index));
        }
        slot = &r;
    }
    std::set<std::size_t> frames;
    for (const auto& [f, _] : grid.begin()->second.begin()->second) frames.insert(f);
    for (const auto& [subject, methods] : grid) {
        for (const auto& [method, by_frame] : methods) {
            std::set<std::size_t> own;
            for (const auto& [f, _] : by_frame) own.insert(f);
            if (own != frames) {
                throw DimensionError("mismatched frame indices for subject " + std::to_string(subject) + ", " + method);
            }
        }
    }

    CompareTable table;
    std::string& t = table.text;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-8s %-24s", "subject", "method");
    t += buf;
    for (std::size_t f : frames) {
        std::snprintf(buf, sizeof(buf), " %10s", ("frame " + std::to_string(f)).c_str());
        t += buf;
    }
    t += '\n';

    for (const auto& [subject, methods] : grid) {
        std::vector<std::string> order;
        for (const auto& [m, _] : methods) order.push_back(m);
        std::stable_sort(order.begin(), order.end(),
                         [](const std::string& a, const std::string& b) { return method_rank(a) < method_rank(b); });
        std::map<std::size_t, double> best;
        for (std::size_t f : frames) {
            double b = INFINITY;
            for (const auto& m : order) b = std::min(b, std::round(methods.at(m).at(f)->mse_cm2 * 100.0));
            best[f] = b;
        }
        for (const auto& m : order) {
            std::snprintf(buf, sizeof(buf), "%-8d %-24s", subject, m.c_str());
            t += buf;
            for (std::size_t f : frames) {
                const ReportRow* r = methods.at(m).at(f);
                const bool is_best = std::round(r->mse_cm2 * 100.0) == best[f];
                std::snprintf(buf, sizeof(buf), " %9.2f%c", r->mse_cm2, is_best ? '*' : ' ');
                t += buf;
                table.rows.push_back(*r);
            }
            t += '\n';
        }
    }
    t += "* best (lowest) value per subject and frame; values equal to two decimals are all marked\n";
    return table;
}

}  // namespace motion
