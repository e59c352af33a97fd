#include "motion/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "motion/errors.hpp"

namespace motion {

bool GradCheckReport::passed() const {
    return std::all_of(blocks.begin(), blocks.end(), [](const GradCheckBlock& b) { return b.passed; });
}

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& b : blocks) m = std::max(m, b.max_rel_error);
    return m;
}

std::string GradCheckReport::first_failure() const {
    for (const auto& b : blocks) {
        if (!b.passed) return b.name;
    }
    return {};
}

namespace {

double eval_loss(const LossBuilder& f) {
    Graph g;
    for (std::size_t i = 0; i < kParamGroupCount; ++i) g.set_group_grad(static_cast<ParamGroup>(i), false);
    const double v = g.value(f(g)).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss during perturbation");
    return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps, double tol) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");

    std::vector<Tensor> analytic_grads;
    {
        Graph g;
        Var loss = f(g);
        g.backward(loss);
        for (Parameter* p : params) analytic_grads.push_back(g.param_grad(*p));
    }

    GradCheckReport report;
    report.tolerance = tol;
    for (std::size_t b = 0; b < params.size(); ++b) {
        Parameter* p = params[b];
        const Tensor& grad = analytic_grads[b];
        if (!grad.all_finite()) throw NumericError("grad_check: non-finite analytic gradient in " + p->name);
        GradCheckBlock block;
        block.name = p->name;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + eps;
            const double up = eval_loss(f);
            p->value[i] = saved - eps;
            const double down = eval_loss(f);
            p->value[i] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > block.max_rel_error) {
                block.max_rel_error = rel;
                block.worst_index = i;
                block.analytic_at_worst = analytic;
                block.numeric_at_worst = numeric;
            }
        }
        block.passed = block.max_rel_error < tol;
        report.blocks.push_back(std::move(block));
    }
    return report;
}

}  // namespace motion
