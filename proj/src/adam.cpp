#include "postdae/adam.hpp"

#include "postdae/error.hpp"

#include <cmath>

namespace postdae::ad {

void adam_step(std::span<Tensor> params, AdamState& state)
{
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0);
            state.second_moment.emplace_back(p.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ContractError("adam_step: parameter list changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].size()) {
            throw ContractError("adam_step: moment buffer does not match parameter " + std::to_string(i));
        }
        for (double g : params[i].grad()) {
            if (!std::isfinite(g)) {
                throw TrainingError("non-finite gradient in parameter tensor " + std::to_string(i) +
                                    " at optimizer step " + std::to_string(state.step + 1));
            }
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto data = params[i].mutable_data();
        const auto grad = params[i].grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = grad.empty() ? 0.0 : grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            data[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

} // namespace postdae::ad
