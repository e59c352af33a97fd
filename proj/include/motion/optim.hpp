#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "motion/autodiff.hpp"

namespace motion {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment estimates and step counts are kept per
// parameter, so different subsets can be stepped independently.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig config);

    // Steps every tracked parameter with its accumulated gradient in `g`.
    void step(const Graph& g);
    // Steps only the tracked parameters whose group is in `groups`.
    void step(const Graph& g, std::span<const ParamGroup> groups);

    const std::vector<Parameter*>& params() const noexcept { return params_; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    void update(std::size_t i, const Tensor& grad);

    std::vector<Parameter*> params_;
    AdamConfig config_;
    std::vector<Tensor> m_, v_;
    std::vector<std::size_t> t_;
};

}  // namespace motion
