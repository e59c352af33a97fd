#include "motion/synth.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "motion/errors.hpp"

namespace motion {
namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0,
                           std::uint64_t c = 0) {
    return std::mt19937_64(mix(mix(mix(mix(seed ^ mix(tag)) + a) + b) + c));
}

Mat3 matmul3(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
    return r;
}

Vec3 transform(const Mat3& m, const Vec3& v) {
    return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

// Rotation about x by a, then about z by b.
Mat3 rotation(double a, double b) {
    const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b);
    const Mat3 rx{1, 0, 0, 0, ca, -sa, 0, sa, ca};
    const Mat3 rz{cb, -sb, 0, sb, cb, 0, 0, 0, 1};
    return matmul3(rz, rx);
}

std::vector<Vec3> rest_offsets(const SkeletonTree& tree, std::uint64_t seed) {
    if (tree == default_skeleton()) {
        return {{0, 0, 0},   {0, 20, 0},  {0, 25, 0},   {0, 20, 0},  {-18, 0, 0},  {0, -28, 0}, {0, -25, 0},
                {0, -8, 0},  {18, 0, 0},  {0, -28, 0},  {0, -25, 0}, {0, -8, 0},   {-10, -5, 0}, {0, -42, 0},
                {0, -40, 0}, {0, -5, 10}, {10, -5, 0},  {0, -42, 0}, {0, -40, 0},  {0, -5, 10}};
    }
    auto rng = stream_rng(seed, 1);
    std::normal_distribution<double> dir(0.0, 1.0);
    std::uniform_real_distribution<double> len(10.0, 25.0);
    std::vector<Vec3> out(tree.joints(), Vec3{0, 0, 0});
    for (std::size_t j = 0; j < tree.joints(); ++j) {
        if (tree.parent(j) < 0) continue;
        Vec3 v{dir(rng), dir(rng), dir(rng)};
        const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + 1e-12;
        const double l = len(rng);
        for (double& c : v) c *= l / norm;
        out[j] = v;
    }
    return out;
}

struct ActivityPattern {
    double frequency = 0.0;              // cycles per frame
    std::vector<std::array<double, 2>> amplitude;  // radians, per joint and axis
    std::vector<std::array<double, 2>> phase;
    Vec3 sway_amplitude{};               // root translation, cm
};

struct SubjectStyle {
    double limb_scale = 1.0;
    double amplitude_scale = 1.0;
    double tempo = 1.0;
    std::vector<double> phase_shift;  // per joint
};

ActivityPattern make_activity(std::uint64_t seed, int activity, std::size_t joints) {
    auto rng = stream_rng(seed, 2, static_cast<std::uint64_t>(activity));
    std::uniform_real_distribution<double> freq(1.0 / 60.0, 1.0 / 30.0);
    std::uniform_real_distribution<double> amp(0.1, 0.3);
    std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> sway(0.0, 4.0);
    ActivityPattern p;
    p.frequency = freq(rng);
    p.amplitude.resize(joints);
    p.phase.resize(joints);
    for (std::size_t j = 0; j < joints; ++j) {
        p.amplitude[j] = {amp(rng), amp(rng)};
        p.phase[j] = {ph(rng), ph(rng)};
    }
    p.sway_amplitude = {sway(rng), sway(rng) * 0.5, sway(rng)};
    return p;
}

SubjectStyle make_subject(std::uint64_t seed, int subject, std::size_t joints) {
    auto rng = stream_rng(seed, 3, static_cast<std::uint64_t>(subject));
    std::uniform_real_distribution<double> limb(0.85, 1.15);
    std::uniform_real_distribution<double> amp(0.75, 1.25);
    std::uniform_real_distribution<double> tempo(0.8, 1.25);
    std::uniform_real_distribution<double> shift(-0.6, 0.6);
    SubjectStyle s;
    s.limb_scale = limb(rng);
    s.amplitude_scale = amp(rng);
    s.tempo = tempo(rng);
    s.phase_shift.resize(joints);
    for (double& v : s.phase_shift) v = shift(rng);
    return s;
}

}  // namespace

SkeletonTree synthetic_skeleton(std::size_t joints) {
    if (joints == 20) return default_skeleton();
    if (joints == 0) throw ConfigError("skeleton needs at least one joint");
    std::vector<int> parent(joints);
    parent[0] = -1;
    for (std::size_t j = 1; j < joints; ++j) parent[j] = static_cast<int>((j - 1) / 2);
    return SkeletonTree(std::move(parent));
}

std::vector<SkeletonSequence> synth_generate(const SynthSpec& spec) {
    if (spec.n_subjects < 1 || spec.n_activities < 1 || spec.trials < 1 || spec.frames < 1) {
        throw ConfigError("synthetic corpus counts must all be >= 1");
    }
    const SkeletonTree& tree = spec.tree;
    const std::size_t joints = tree.joints();
    const auto offsets = rest_offsets(tree, spec.seed);
    const auto& order = tree.topological_order();
    const Vec3 base{0.0, 95.0, 250.0};
    constexpr double kTwoPi = 2.0 * std::numbers::pi;

    std::vector<ActivityPattern> activities;
    for (int a = 1; a <= spec.n_activities; ++a) activities.push_back(make_activity(spec.seed, a, joints));

    std::vector<SkeletonSequence> out;
    for (int s = 1; s <= spec.n_subjects; ++s) {
        const SubjectStyle style = make_subject(spec.seed, s, joints);
        for (int a = 1; a <= spec.n_activities; ++a) {
            const ActivityPattern& act = activities[static_cast<std::size_t>(a - 1)];
            for (int trial = 1; trial <= spec.trials; ++trial) {
                auto rng = stream_rng(spec.seed, 4, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(a),
                                      static_cast<std::uint64_t>(trial));
                std::normal_distribution<double> jitter(0.0, 1.0);
                const double amp_jitter = 1.0 + 0.02 * jitter(rng);
                const double phase_jitter = 0.05 * jitter(rng);
                std::normal_distribution<double> noise(0.0, spec.frame_noise_cm);

                SkeletonSequence seq;
                seq.subject_id = s;
                seq.activity_id = a;
                seq.trial_id = trial;
                seq.joints = joints;
                seq.dims = 3;
                seq.positions = Tensor({spec.frames, joints * 3});

                std::vector<Vec3> pos(joints);
                std::vector<Mat3> global(joints);
                const double omega = kTwoPi * act.frequency * style.tempo;
                for (std::size_t t = 0; t < spec.frames; ++t) {
                    const double time = static_cast<double>(t);
                    for (std::size_t j : order) {
                        const double gain = style.amplitude_scale * amp_jitter;
                        const double shift = style.phase_shift[j] + phase_jitter;
                        const double ax = gain * act.amplitude[j][0] * std::sin(omega * time + act.phase[j][0] + shift);
                        const double az = gain * act.amplitude[j][1] * std::sin(omega * time + act.phase[j][1] + shift);
                        const int p = tree.parent(j);
                        if (p < 0) {
                            global[j] = rotation(0.2 * ax, 0.2 * az);
                            for (int k = 0; k < 3; ++k) {
                                pos[j][k] = base[k] + gain * act.sway_amplitude[k] *
                                                          std::sin(omega * time + act.phase[j][k % 2] + k);
                            }
                            continue;
                        }
                        const auto pj = static_cast<std::size_t>(p);
                        global[j] = matmul3(global[pj], rotation(ax, az));
                        Vec3 bone = offsets[j];
                        for (double& c : bone) c *= style.limb_scale;
                        const Vec3 rotated = transform(global[j], bone);
                        for (int k = 0; k < 3; ++k) pos[j][k] = pos[pj][k] + rotated[k];
                    }
                    for (std::size_t j = 0; j < joints; ++j) {
                        for (int k = 0; k < 3; ++k) {
                            seq.positions[t * joints * 3 + j * 3 + static_cast<std::size_t>(k)] = pos[j][k] + noise(rng);
                        }
                    }
                }
                out.push_back(std::move(seq));
            }
        }
    }
    return out;
}

}  // namespace motion
