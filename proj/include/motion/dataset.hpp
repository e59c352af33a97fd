#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "motion/tensor.hpp"

namespace motion {

// One recorded trial: positions in centimeters, shape [T x J*D].
struct SkeletonSequence {
    int subject_id = 0;
    int activity_id = 0;
    int trial_id = 0;
    std::size_t joints = 0;
    std::size_t dims = 3;
    Tensor positions;

    std::size_t frames() const { return positions.rows(); }
    std::size_t pose_dim() const { return joints * dims; }
};

struct WindowProvenance {
    int subject_id = 0;
    int activity_id = 0;
    int trial_id = 0;
    std::size_t start = 0;  // 0-based frame index of the first observed frame
};

struct MotionWindow {
    Tensor observed;  // [tau x N]
    Tensor target;    // [H x N]
    WindowProvenance provenance;
};

struct FeatureStreams {
    Tensor position;
    Tensor velocity;
    Tensor acceleration;
};

// CSV rows `subject,activity,trial,frame_index,x1,y1,z1,...` with a header.
// Rows of one trial must be contiguous with ascending frame_index.
std::vector<SkeletonSequence> load_sequences(const std::filesystem::path& path, std::size_t joints,
                                             std::size_t dims = 3);
void save_sequences(const std::filesystem::path& path, std::span<const SkeletonSequence> seqs);

// First frame of velocity and acceleration is zero.
FeatureStreams derive_streams(const Tensor& positions);

// Every window whose observed+target span fits inside the sequence.
std::vector<MotionWindow> window_sequences(std::span<const SkeletonSequence> seqs, std::size_t tau, std::size_t horizon,
                                           std::size_t stride);

struct SubjectSplit {
    std::vector<SkeletonSequence> finetune;
    std::vector<SkeletonSequence> test;
};

struct CrossSubjectSplit {
    std::vector<SkeletonSequence> phase1_train;
    std::vector<SkeletonSequence> phase1_val;
    std::map<int, SubjectSplit> phase2;  // keyed by even subject id
};

struct SplitOptions {
    double val_fraction = 0.1;  // fraction of phase-1 trials held out
    int finetune_trial = 1;
    std::uint64_t seed = 0;
};

// Odd subjects feed phase 1 (train/val split by whole trials); even subjects
// form the phase-2 pool with one fine-tuning trial and the rest for testing.
CrossSubjectSplit split_cross_subject(std::span<const SkeletonSequence> seqs, const SplitOptions& options = {});

inline constexpr double kVarianceFloor = 1e-8;

struct CoordStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    Tensor normalize(const Tensor& x) const;
    Tensor denormalize(const Tensor& x) const;
};

// Per-coordinate standardization for each input stream.
struct NormStats {
    CoordStats position;
    CoordStats velocity;
    CoordStats acceleration;
};

CoordStats fit_coord_stats(std::span<const Tensor> frames);
NormStats fit_stats(std::span<const MotionWindow> train_windows);

// Normalizes observed and target positions with the position statistics.
std::vector<MotionWindow> normalize(std::span<const MotionWindow> windows, const NormStats& stats);

}  // namespace motion
