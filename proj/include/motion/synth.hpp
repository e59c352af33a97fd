#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "motion/dataset.hpp"
#include "motion/skeleton.hpp"

namespace motion {

struct SynthSpec {
    int n_subjects = 8;
    int n_activities = 27;
    int trials = 4;
    std::size_t frames = 60;
    SkeletonTree tree = default_skeleton();
    std::uint64_t seed = 0;
    double frame_noise_cm = 0.1;
};

// Tree used by the generator for J joints: the default skeleton for J == 20,
// otherwise a heap-ordered binary tree (parent of j is (j-1)/2).
SkeletonTree synthetic_skeleton(std::size_t joints);

// Articulated sinusoidal motion. Each activity fixes per-joint rotation
// amplitudes, phases and a base frequency; each subject applies a persistent
// limb scale, amplitude scale, per-joint phase shift and tempo multiplier; each
// trial adds small jitter plus per-frame measurement noise. Bone lengths are
// preserved by construction (rotations only).
std::vector<SkeletonSequence> synth_generate(const SynthSpec& spec);

}  // namespace motion
