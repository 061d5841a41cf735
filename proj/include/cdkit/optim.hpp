#pragma once

#include <cmath>

#include "cdkit/nn.hpp"

namespace cdkit {

struct TrainConfig {
    double initial_lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t epochs = 200;
    std::int64_t batch_size = 16;
    std::uint64_t seed = 0;

    void validate() const {
        if (initial_lr <= 0 || weight_decay < 0 || epsilon <= 0 || epochs < 0 || batch_size <= 0)
            throw std::invalid_argument("train config: nonpositive field");
        if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
            throw std::invalid_argument("train config: betas must lie in (0,1)");
    }
};

/// Per-step linear decay to zero: lr = initial_lr * (1 - step/total_steps).
inline double lr_at(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
    if (total_steps <= 0) throw std::invalid_argument("lr_at: total_steps must be positive");
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(total_steps) + "]");
    return cfg.initial_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

/// First- and second-moment buffers, one pair per parameter tensor, in the
/// same order as the model's parameter list.
template <typename T>
struct AdamWState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::int64_t step = 0;

    void ensure(const ParamList<T>& params) {
        if (!m.empty()) {
            if (m.size() != params.size())
                throw std::invalid_argument("adamw: state tracks " + std::to_string(m.size()) +
                                            " tensors but model has " + std::to_string(params.size()));
            return;
        }
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto& p : params) {
            m.emplace_back(p.tensor->data.size(), T(0));
            v.emplace_back(p.tensor->data.size(), T(0));
        }
    }
};

/// Decoupled weight decay: theta <- theta - lr*(m_hat/(sqrt(v_hat)+eps) + wd*theta).
template <typename T>
void adamw_step(const ParamList<T>& params, AdamWState<T>& state, double lr, const TrainConfig& cfg) {
    state.ensure(params);
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& t = *params[i].tensor;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < t.data.size(); ++j) {
            const double g = static_cast<double>(t.grad[j]);
            if (std::isnan(g))
                throw std::runtime_error("adamw: NaN gradient in parameter " + params[i].name);
            const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * g;
            const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double m_hat = mj / bc1;
            const double v_hat = vj / bc2;
            const double theta = static_cast<double>(t.data[j]);
            t.data[j] = static_cast<T>(theta - lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) +
                                                     cfg.weight_decay * theta));
        }
    }
}

}  // namespace cdkit
