#include "motion/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace motion {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("Adam learning rate must be positive");
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
    t_.assign(params_.size(), 0);
}

void Adam::update(std::size_t i, const Tensor& grad) {
    Parameter& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const std::size_t t = ++t_[i];
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t k = 0; k < grad.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
        v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
        p.value[k] -= config_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
    }
}

void Adam::step(const Graph& g) {
    for (std::size_t i = 0; i < params_.size(); ++i) update(i, g.param_grad(*params_[i]));
}

void Adam::step(const Graph& g, std::span<const ParamGroup> groups) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (std::find(groups.begin(), groups.end(), params_[i]->group) == groups.end()) continue;
        update(i, g.param_grad(*params_[i]));
    }
}

}  // namespace motion
