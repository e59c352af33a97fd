#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "motion/config.hpp"
#include "motion/errors.hpp"
#include "motion/pipeline.hpp"

namespace {

const char* describe(const std::string& cmd) {
    if (cmd == "synth") return "Write a synthetic skeleton corpus";
    if (cmd == "train") return "Phase 1: adversarially regularized training";
    if (cmd == "finetune") return "Phase 2: decoder fine-tuning per held-out subject";
    if (cmd == "eval") return "Evaluate baseline, phase-1 and phase-2 models";
    if (cmd == "compare") return "Format the comparison table from report.csv";
    if (cmd == "predict") return "Write observed, target and predicted poses for one window";
    return "Run the gradient-check suite";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Human motion prediction with adversarial regularization and decoder fine-tuning"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "run";
    for (const auto& name : motion::command_names()) {
        CLI::App* sub = app.add_subcommand(name, describe(name));
        sub->add_option("--config", config_path, "Configuration file (key = value)")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Seed override");
        sub->add_option("--out", out_dir, "Run directory")->capture_default_str();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        motion::ExperimentConfig config = config_path.empty() ? motion::parse_config("") : motion::load_config(config_path);
        if (seed) {
            config.set_seed(*seed);
            config.validate();
        }
        return motion::run_command(command, config, out_dir, std::cout);
    } catch (const motion::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
