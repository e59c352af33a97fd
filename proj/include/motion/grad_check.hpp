#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "motion/autodiff.hpp"

namespace motion {

struct GradCheckBlock {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double tolerance = 0.0;

    bool passed() const;
    double max_rel_error() const;
    // Name of the first failing block, empty when everything passed.
    std::string first_failure() const;
};

using LossBuilder = std::function<Var(Graph&)>;

// Compares backward() against central differences (f(p+eps) - f(p-eps)) / 2eps
// for every element of every parameter. Relative error uses the denominator
// max(|analytic|, |numeric|, 1e-8). `f` must build a scalar loss from the
// parameters and be a pure function of them.
GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps = 1e-5,
                           double tol = 1e-4);

}  // namespace motion
