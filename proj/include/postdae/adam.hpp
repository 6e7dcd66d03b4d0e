#pragma once

#include "postdae/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace postdae::ad {

struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Moment buffers are created on the first call. Parameters without
/// a gradient are treated as having a zero gradient. Throws TrainingError if
/// any gradient is not finite, leaving parameters and state untouched.
void adam_step(std::span<Tensor> params, AdamState& state);

} // namespace postdae::ad
