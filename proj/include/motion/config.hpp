#pragma once

// Experiment configuration: a flat `key = value` file, '#' starts a comment.
// Every key has a default; unknown keys and malformed values are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "motion/adversarial.hpp"
#include "motion/evaluation.hpp"
#include "motion/finetune.hpp"
#include "motion/model.hpp"
#include "motion/synth.hpp"

namespace motion {

struct ExperimentConfig {
    std::uint64_t seed = 0;

    std::string data_source = "synth";  // synth | csv
    std::filesystem::path data_path;     // csv corpus when data_source == csv
    std::filesystem::path skeleton_path; // empty: default 20-joint tree (or generator tree)

    int synth_subjects = 8;
    int synth_activities = 27;
    int synth_trials = 4;
    std::size_t synth_frames = 60;
    std::size_t synth_joints = 20;
    double synth_noise_cm = 0.1;
    std::vector<int> subjects;  // keep only these subjects; empty keeps all

    std::size_t tau = 15;
    std::size_t horizon = 15;
    std::size_t train_stride = 1;
    std::size_t eval_stride = 15;

    double val_fraction = 0.1;
    int finetune_trial = 1;

    // latent_c == 0 means "number of activities in the corpus"
    ModelHyper model = [] {
        ModelHyper h;
        h.latent_c = 0;
        return h;
    }();

    TrainConfig train;
    FinetuneConfig finetune;

    std::vector<std::size_t> eval_frames = default_frame_indices();
    MseMode eval_mse = MseMode::joint_l2;
    std::vector<int> eval_subjects;  // phase-2 subjects to fine-tune/evaluate; empty = all

    int predict_subject = 2;
    int predict_activity = 1;
    int predict_trial = 2;
    std::size_t predict_start = 0;
    std::string predict_model = "phase2";  // phase1 | phase2

    double gradcheck_eps = 1e-5;
    double gradcheck_tol = 1e-4;

    // Applies the seed to every seeded component.
    void set_seed(std::uint64_t s);
    void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const ExperimentConfig& config);

}  // namespace motion
