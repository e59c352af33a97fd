#include "motion/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>

#include "motion/errors.hpp"

namespace motion {
namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        out.push_back(line.substr(pos, comma - pos));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t lineno, const char* what) {
    field = trim(field);
    T value{};
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError(std::string("malformed ") + what + " '" + std::string(field) + "'", lineno);
    }
    return value;
}

void append_double(std::string& out, double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

}  // namespace

std::vector<SkeletonSequence> load_sequences(const std::filesystem::path& path, std::size_t joints, std::size_t dims) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open sequence file " + path.string(), 0);
    const std::size_t expected_cols = 4 + joints * dims;

    std::vector<SkeletonSequence> seqs;
    std::vector<double> buffer;
    std::set<std::tuple<int, int, int>> seen;
    long last_frame = -1;

    auto flush = [&]() {
        if (seqs.empty() || buffer.empty()) return;
        SkeletonSequence& s = seqs.back();
        const std::size_t n = joints * dims;
        const std::size_t rows = buffer.size() / n;
        s.positions = Tensor({rows, n}, std::move(buffer));
        buffer.clear();
    };

    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        if (!header) {
            if (trim(line).substr(0, 7) != "subject") throw ParseError("missing header row", lineno);
            header = true;
            continue;
        }
        const auto fields = split_csv(line);
        if (fields.size() != expected_cols) {
            throw ParseError("expected " + std::to_string(expected_cols) + " columns, found " +
                                 std::to_string(fields.size()),
                             lineno);
        }
        const int subject = parse_number<int>(fields[0], lineno, "subject");
        const int activity = parse_number<int>(fields[1], lineno, "activity");
        const int trial = parse_number<int>(fields[2], lineno, "trial");
        const long frame = parse_number<long>(fields[3], lineno, "frame_index");

        const bool new_trial = seqs.empty() || seqs.back().subject_id != subject ||
                               seqs.back().activity_id != activity || seqs.back().trial_id != trial;
        if (new_trial) {
            flush();
            if (!seen.insert({subject, activity, trial}).second) {
                throw ParseError("rows of trial (" + std::to_string(subject) + "," + std::to_string(activity) + "," +
                                     std::to_string(trial) + ") are not contiguous",
                                 lineno);
            }
            SkeletonSequence s;
            s.subject_id = subject;
            s.activity_id = activity;
            s.trial_id = trial;
            s.joints = joints;
            s.dims = dims;
            seqs.push_back(std::move(s));
        } else if (frame <= last_frame) {
            throw ParseError("frame_index must be ascending within a trial", lineno);
        }
        last_frame = frame;
        for (std::size_t c = 4; c < fields.size(); ++c) {
            const double v = parse_number<double>(fields[c], lineno, "coordinate");
            if (!std::isfinite(v)) throw ParseError("non-finite coordinate", lineno);
            buffer.push_back(v);
        }
    }
    if (!header) throw ParseError("empty sequence file " + path.string(), 0);
    flush();
    return seqs;
}

void save_sequences(const std::filesystem::path& path, std::span<const SkeletonSequence> seqs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::string text = "subject,activity,trial,frame_index";
    if (!seqs.empty()) {
        static constexpr char kAxis[] = {'x', 'y', 'z'};
        for (std::size_t j = 0; j < seqs.front().joints; ++j) {
            for (std::size_t d = 0; d < seqs.front().dims; ++d) {
                text += ',';
                text += d < 3 ? std::string(1, kAxis[d]) : "c" + std::to_string(d);
                text += std::to_string(j + 1);
            }
        }
    }
    text += '\n';
    for (const auto& s : seqs) {
        const std::size_t n = s.pose_dim();
        for (std::size_t t = 0; t < s.frames(); ++t) {
            text += std::to_string(s.subject_id) + ',' + std::to_string(s.activity_id) + ',' +
                    std::to_string(s.trial_id) + ',' + std::to_string(t);
            for (std::size_t i = 0; i < n; ++i) {
                text += ',';
                append_double(text, s.positions[t * n + i]);
            }
            text += '\n';
        }
    }
    out << text;
}

FeatureStreams derive_streams(const Tensor& positions) {
    const std::size_t tau = positions.rows(), n = positions.cols();
    if (tau == 0) throw DimensionError("derive_streams needs at least one frame");
    FeatureStreams fs{positions, Tensor(positions.shape()), Tensor(positions.shape())};
    for (std::size_t t = 1; t < tau; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            fs.velocity[t * n + i] = positions[t * n + i] - positions[(t - 1) * n + i];
            fs.acceleration[t * n + i] = fs.velocity[t * n + i] - fs.velocity[(t - 1) * n + i];
        }
    }
    return fs;
}

std::vector<MotionWindow> window_sequences(std::span<const SkeletonSequence> seqs, std::size_t tau, std::size_t horizon,
                                           std::size_t stride) {
    if (tau == 0 || horizon == 0 || stride == 0) throw ConfigError("tau, horizon and stride must be >= 1");
    std::vector<MotionWindow> out;
    for (const auto& s : seqs) {
        const std::size_t frames = s.frames(), n = s.pose_dim();
        if (frames < tau + horizon) continue;
        for (std::size_t start = 0; start + tau + horizon <= frames; start += stride) {
            MotionWindow w;
            const auto first = s.positions.values().begin() + static_cast<std::ptrdiff_t>(start * n);
            w.observed = Tensor({tau, n}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(tau * n)));
            w.target = Tensor({horizon, n}, std::vector<double>(first + static_cast<std::ptrdiff_t>(tau * n),
                                                                first + static_cast<std::ptrdiff_t>((tau + horizon) * n)));
            w.provenance = {s.subject_id, s.activity_id, s.trial_id, start};
            out.push_back(std::move(w));
        }
    }
    return out;
}

CrossSubjectSplit split_cross_subject(std::span<const SkeletonSequence> seqs, const SplitOptions& options) {
    if (!(options.val_fraction >= 0.0 && options.val_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in [0, 1)");
    }
    std::vector<SkeletonSequence> odd;
    CrossSubjectSplit split;
    for (const auto& s : seqs) {
        if (s.subject_id % 2 != 0) {
            odd.push_back(s);
        } else if (s.trial_id == options.finetune_trial) {
            split.phase2[s.subject_id].finetune.push_back(s);
        } else {
            split.phase2[s.subject_id].test.push_back(s);
        }
    }
    if (odd.empty()) throw ConfigError("cross-subject split: no odd-numbered subjects for phase 1");
    if (split.phase2.empty()) throw ConfigError("cross-subject split: no even-numbered subjects for phase 2");
    for (const auto& [subject, part] : split.phase2) {
        if (part.finetune.empty() || part.test.empty()) {
            throw ConfigError("cross-subject split: subject " + std::to_string(subject) +
                              " needs fine-tuning trial " + std::to_string(options.finetune_trial) +
                              " and at least one test trial");
        }
    }

    std::vector<std::size_t> order(odd.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(options.seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::lround(options.val_fraction * static_cast<double>(odd.size())));
    if (options.val_fraction > 0.0 && odd.size() >= 2) n_val = std::max<std::size_t>(n_val, 1);
    n_val = std::min(n_val, odd.size() - 1);
    std::vector<bool> is_val(odd.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
    for (std::size_t i = 0; i < odd.size(); ++i) {
        (is_val[i] ? split.phase1_val : split.phase1_train).push_back(odd[i]);
    }
    return split;
}

Tensor CoordStats::normalize(const Tensor& x) const {
    const std::size_t n = mean.size();
    if (x.cols() != n) throw DimensionError("normalize: expected " + std::to_string(n) + " columns");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % n]) / stddev[i % n];
    return out;
}

Tensor CoordStats::denormalize(const Tensor& x) const {
    const std::size_t n = mean.size();
    if (x.cols() != n) throw DimensionError("denormalize: expected " + std::to_string(n) + " columns");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * stddev[i % n] + mean[i % n];
    return out;
}

CoordStats fit_coord_stats(std::span<const Tensor> frames) {
    if (frames.empty()) throw ConfigError("cannot fit statistics on zero windows");
    const std::size_t n = frames.front().cols();
    std::vector<double> sum(n, 0.0);
    std::size_t count = 0;
    for (const auto& f : frames) {
        if (f.cols() != n) throw DimensionError("fit_stats: inconsistent pose dimension");
        for (std::size_t i = 0; i < f.size(); ++i) sum[i % n] += f[i];
        count += f.rows();
    }
    CoordStats st;
    st.mean.resize(n);
    for (std::size_t i = 0; i < n; ++i) st.mean[i] = sum[i] / static_cast<double>(count);
    std::vector<double> sq(n, 0.0);
    for (const auto& f : frames) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double d = f[i] - st.mean[i % n];
            sq[i % n] += d * d;
        }
    }
    st.stddev.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        st.stddev[i] = std::sqrt(std::max(sq[i] / static_cast<double>(count), kVarianceFloor));
    }
    return st;
}

NormStats fit_stats(std::span<const MotionWindow> train_windows) {
    std::vector<Tensor> pos, vel, acc;
    pos.reserve(train_windows.size());
    for (const auto& w : train_windows) {
        FeatureStreams fs = derive_streams(w.observed);
        pos.push_back(std::move(fs.position));
        vel.push_back(std::move(fs.velocity));
        acc.push_back(std::move(fs.acceleration));
    }
    return {fit_coord_stats(pos), fit_coord_stats(vel), fit_coord_stats(acc)};
}

std::vector<MotionWindow> normalize(std::span<const MotionWindow> windows, const NormStats& stats) {
    std::vector<MotionWindow> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        out.push_back({stats.position.normalize(w.observed), stats.position.normalize(w.target), w.provenance});
    }
    return out;
}

}  // namespace motion
