#pragma once

#include "postdae/ops.hpp"
#include "postdae/rng.hpp"
#include "postdae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace testing {

using postdae::ad::Tensor;

inline Tensor random_tensor(const postdae::ad::Shape& shape, postdae::Rng& rng, double lo = -1.0, double hi = 1.0)
{
    std::vector<double> v(postdae::ad::numel(shape));
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return Tensor(shape, std::move(v), true);
}

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over every input, using central differences with the given step.
inline double gradient_error(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                             double step = 1e-5)
{
    for (auto& t : inputs) {
        t.zero_grad();
    }
    f(inputs).backward();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (auto& t : inputs) {
        if (!t.requires_grad()) {
            continue;
        }
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + step;
            const double up = f(inputs).item();
            data[i] = keep - step;
            const double down = f(inputs).item();
            data[i] = keep;
            const double numeric = (up - down) / (2.0 * step);
            diff += (analytic[i] - numeric) * (analytic[i] - numeric);
            na += analytic[i] * analytic[i];
            nn += numeric * numeric;
        }
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Scalar projection <op(x), r> with a fixed random r, so every output
/// element contributes to the checked gradient.
inline Tensor project(const Tensor& y, std::uint64_t seed)
{
    postdae::Rng rng(seed, 99);
    auto r = random_tensor(y.shape(), rng);
    return postdae::ad::sum(postdae::ad::mul(y, r.detach()));
}

struct GradCase {
    const char* name;
    std::function<double(std::uint64_t seed)> error;
};

/// The differentiable op suite; each entry returns the relative gradient
/// error for one seed.
inline std::vector<GradCase> gradient_suite()
{
    namespace ad = postdae::ad;
    using postdae::Rng;
    std::vector<GradCase> cases;
    cases.push_back({"conv2d stride 1", [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_tensor({2, 2, 6, 6}, rng);
                         auto w = random_tensor({3, 2, 3, 3}, rng);
                         auto b = random_tensor({3}, rng);
                         return gradient_error([s](const std::vector<Tensor>& v) { return project(ad::conv2d(v[0], v[1], v[2], 1), s); },
                                               {x, w, b});
                     }});
    cases.push_back({"conv2d stride 2", [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_tensor({2, 2, 7, 6}, rng);
                         auto w = random_tensor({2, 2, 3, 3}, rng);
                         auto b = random_tensor({2}, rng);
                         return gradient_error([s](const std::vector<Tensor>& v) { return project(ad::conv2d(v[0], v[1], v[2], 2), s); },
                                               {x, w, b});
                     }});
    cases.push_back({"conv2d 1x1", [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_tensor({1, 3, 4, 4}, rng);
                         auto w = random_tensor({2, 3, 1, 1}, rng);
                         auto b = random_tensor({2}, rng);
                         return gradient_error([s](const std::vector<Tensor>& v) { return project(ad::conv2d(v[0], v[1], v[2], 1), s); },
                                               {x, w, b});
                     }});
    cases.push_back({"maxpool2x2", [](std::uint64_t s) {
                         Rng rng(s);
                         // a shuffled grid of well separated values has no ties
                         std::vector<double> v(2 * 2 * 6 * 6);
                         for (std::size_t i = 0; i < v.size(); ++i) {
                             v[i] = static_cast<double>(i) * 0.01;
                         }
                         for (std::size_t i = v.size(); i > 1; --i) {
                             std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
                         }
                         Tensor x({2, 2, 6, 6}, v, true);
                         return gradient_error([s](const std::vector<Tensor>& t) { return project(ad::maxpool2x2(t[0]), s); }, {x});
                     }});
    cases.push_back({"upconv", [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_tensor({2, 2, 3, 3}, rng);
                         auto w = random_tensor({3, 2, 3, 3}, rng);
                         auto b = random_tensor({3}, rng);
                         return gradient_error([s](const std::vector<Tensor>& v) { return project(ad::upconv(v[0], v[1], v[2]), s); },
                                               {x, w, b});
                     }});
    cases.push_back({"dense", [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_tensor({3, 5}, rng);
                         auto w = random_tensor({5, 4}, rng);
                         auto b = random_tensor({4}, rng);
                         return gradient_error([s](const std::vector<Tensor>& v) { return project(ad::dense(v[0], v[1], v[2]), s); },
                                               {x, w, b});
                     }});
    cases.push_back({"relu", [](std::uint64_t s) {
                         Rng rng(s);
                         std::vector<double> v(40);
                         for (auto& e : v) {
                             // keep clear of the kink
                             e = rng.uniform(0.1, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
                         }
                         Tensor x({2, 20}, v, true);
                         return gradient_error([s](const std::vector<Tensor>& t) { return project(ad::relu(t[0]), s); }, {x});
                     }});
    cases.push_back({"sigmoid", [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_tensor({2, 3, 2, 2}, rng, -4.0, 4.0);
                         return gradient_error([s](const std::vector<Tensor>& t) { return project(ad::sigmoid(t[0]), s); }, {x});
                     }});
    cases.push_back({"softmax_channels", [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_tensor({2, 3, 3, 2}, rng, -3.0, 3.0);
                         return gradient_error([s](const std::vector<Tensor>& t) { return project(ad::softmax_channels(t[0]), s); }, {x});
                     }});
    cases.push_back({"soft_dice_loss binary", [](std::uint64_t s) {
                         Rng rng(s);
                         auto p = random_tensor({2, 1, 4, 4}, rng, 0.01, 0.99);
                         std::vector<double> t(p.size());
                         for (auto& e : t) {
                             e = rng.bernoulli(0.4) ? 1.0 : 0.0;
                         }
                         Tensor target(p.shape(), t);
                         return gradient_error([target](const std::vector<Tensor>& v) { return ad::soft_dice_loss(v[0], target, 1.0); }, {p});
                     }});
    cases.push_back({"soft_dice_loss multi-class", [](std::uint64_t s) {
                         Rng rng(s);
                         auto p = random_tensor({2, 3, 4, 4}, rng, 0.01, 0.99);
                         std::vector<double> t(p.size());
                         for (auto& e : t) {
                             e = rng.bernoulli(0.3) ? 1.0 : 0.0;
                         }
                         Tensor target(p.shape(), t);
                         return gradient_error([target](const std::vector<Tensor>& v) { return ad::soft_dice_loss(v[0], target, 0.5); }, {p});
                     }});
    return cases;
}

} // namespace testing
