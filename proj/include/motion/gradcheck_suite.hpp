#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "motion/grad_check.hpp"
#include "motion/model.hpp"

namespace motion {

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    std::uint64_t seed = 0;
};

struct GradCheckEntry {
    std::string name;
    GradCheckReport report;
};

// Every registered op, every model component, the adversarial objectives and
// the composed phase-1 loss on the toy model below.
std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckOptions& options = {});

// Toy size used for the composed-loss check: J=3, D=3, d_h=8.
ModelHyper toy_hyper(std::size_t joints = 3);

// The phase-1 objective on a random batch: reconstruction + lambda * (gen_z +
// gen_c) against encoder, latent and decoder parameters, and the discriminator
// loss against the discriminator parameters. Both halves are reported.
std::vector<GradCheckEntry> check_phase1_loss(const ModelHyper& hyper, std::size_t tau, std::size_t horizon,
                                              std::size_t batch, double lambda_adv, const GradCheckOptions& options);

}  // namespace motion
