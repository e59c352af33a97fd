#pragma once

// Experiment subcommands over one run directory:
//   corpus.csv, skeleton.txt, config.txt            synth
//   phase1.ckpt, phase1_log.csv                     train
//   phase2_s<ID>.ckpt, phase2_s<ID>_log.csv         finetune
//   report.csv, curves_s<ID>.csv                    eval
//   table.txt, table.csv                            compare
//   predict_s<S>_a<A>_t<T>_f<start>.csv             predict

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "motion/config.hpp"
#include "motion/dataset.hpp"
#include "motion/skeleton.hpp"

namespace motion {

struct ExperimentData {
    SkeletonTree tree;
    std::vector<SkeletonSequence> sequences;
    CrossSubjectSplit split;
    int n_activities = 0;
};

// Loads or generates the corpus, applies the subject filter and splits it.
ExperimentData prepare_data(const ExperimentConfig& config);
std::vector<SkeletonSequence> generate_corpus(const ExperimentConfig& config, const SkeletonTree& tree);
SkeletonTree resolve_skeleton(const ExperimentConfig& config);
ModelHyper resolve_hyper(const ExperimentConfig& config, const ExperimentData& data);

// Phase-2 subjects selected by eval.subjects (all of the pool when empty).
std::vector<int> phase2_subjects(const ExperimentConfig& config, const ExperimentData& data);

std::filesystem::path phase2_checkpoint_path(const std::filesystem::path& out, int subject);

// Each returns the process exit status; errors propagate as exceptions.
int cmd_synth(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& msg);
int cmd_train(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& msg);
int cmd_finetune(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& msg);
int cmd_eval(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& msg);
int cmd_compare(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& msg);
int cmd_predict(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& msg);
int cmd_gradcheck(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& msg);

const std::vector<std::string>& command_names();
int run_command(const std::string& command, const ExperimentConfig& config, const std::filesystem::path& out,
                std::ostream& msg);

}  // namespace motion
