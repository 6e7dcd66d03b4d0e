#include "postdae/crf.hpp"

#include "postdae/error.hpp"
#include "postdae/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace postdae::crf {

void CrfParams::validate() const
{
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!positive(theta_alpha) || !positive(theta_beta) || !positive(theta_gamma)) {
        throw ConfigError("CRF bandwidths must be positive");
    }
    if (!nonneg(w_bilateral) || !nonneg(w_smooth)) {
        throw ConfigError("CRF kernel weights must be nonnegative");
    }
    if (iterations < 1) {
        throw ConfigError("CRF needs at least one mean-field iteration");
    }
}

CrfParams CrfParams::for_size(int size)
{
    CrfParams p;
    const double scale = static_cast<double>(size) / 1024.0;
    p.theta_alpha *= scale;
    p.theta_gamma *= scale;
    return p;
}

void to_json(nlohmann::json& j, const CrfParams& p)
{
    j = nlohmann::json{{"theta_alpha", p.theta_alpha}, {"theta_beta", p.theta_beta}, {"theta_gamma", p.theta_gamma},
                       {"w_bilateral", p.w_bilateral}, {"w_smooth", p.w_smooth},     {"iterations", p.iterations}};
}

void from_json(const nlohmann::json& j, CrfParams& p)
{
    const CrfParams d;
    p.theta_alpha = j.value("theta_alpha", d.theta_alpha);
    p.theta_beta = j.value("theta_beta", d.theta_beta);
    p.theta_gamma = j.value("theta_gamma", d.theta_gamma);
    p.w_bilateral = j.value("w_bilateral", d.w_bilateral);
    p.w_smooth = j.value("w_smooth", d.w_smooth);
    p.iterations = j.value("iterations", d.iterations);
}

namespace {

void normalize_exp(std::span<double> v)
{
    const double peak = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (auto& x : v) {
        x = std::exp(x - peak);
        total += x;
    }
    for (auto& x : v) {
        x /= total;
    }
}

/// exp(x) is exactly 0.0 in double precision below this.
constexpr double kExpUnderflow = -746.0;

} // namespace

SoftMask meanfield_infer(const SoftMask& unary, const GrayImage& image, const CrfParams& params)
{
    params.validate();
    if (unary.width() != image.width() || unary.height() != image.height()) {
        throw ContractError("crf: unary is " + std::to_string(unary.width()) + "x" + std::to_string(unary.height()) +
                            " but image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()));
    }
    const int w = unary.width();
    const int h = unary.height();
    const auto k = static_cast<std::size_t>(unary.num_classes());
    const auto n = unary.pixels();
    const auto intensity = image.intensities();

    // negative-log unary potentials; the initial marginals are their softmax
    std::vector<double> potential(n * k);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = 0; c < k; ++c) {
            potential[p * k + c] = -std::log(std::clamp(unary.prob(p, static_cast<int>(c)), kUnaryFloor, 1.0));
        }
    }
    std::vector<double> q(n * k);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = 0; c < k; ++c) {
            q[p * k + c] = -potential[p * k + c];
        }
        normalize_exp(std::span(q).subspan(p * k, k));
    }

    // spatial exponents and the smoothness kernel depend only on the offset
    const std::size_t span_x = 2 * static_cast<std::size_t>(w) - 1;
    const std::size_t span_y = 2 * static_cast<std::size_t>(h) - 1;
    std::vector<double> bilateral_spatial(span_x * span_y);
    std::vector<double> smooth(span_x * span_y);
    const double ia = 1.0 / (2.0 * params.theta_alpha * params.theta_alpha);
    const double ig = 1.0 / (2.0 * params.theta_gamma * params.theta_gamma);
    const double ib = 1.0 / (2.0 * params.theta_beta * params.theta_beta);
    for (std::size_t oy = 0; oy < span_y; ++oy) {
        for (std::size_t ox = 0; ox < span_x; ++ox) {
            const double dx = static_cast<double>(ox) - (w - 1);
            const double dy = static_cast<double>(oy) - (h - 1);
            const double d2 = dx * dx + dy * dy;
            bilateral_spatial[oy * span_x + ox] = -d2 * ia;
            smooth[oy * span_x + ox] = params.w_smooth * std::exp(-d2 * ig);
        }
    }

    // offsets whose kernel is exactly zero in double precision are skipped
    int reach_x = 0;
    int reach_y = 0;
    for (std::size_t oy = 0; oy < span_y; ++oy) {
        for (std::size_t ox = 0; ox < span_x; ++ox) {
            const std::size_t off = oy * span_x + ox;
            const bool live = smooth[off] > 0.0 || (params.w_bilateral > 0.0 && bilateral_spatial[off] > kExpUnderflow);
            if (live) {
                reach_x = std::max(reach_x, std::abs(static_cast<int>(ox) - (w - 1)));
                reach_y = std::max(reach_y, std::abs(static_cast<int>(oy) - (h - 1)));
            }
        }
    }

    std::vector<double> next(n * k);
    for (int iter = 0; iter < params.iterations; ++iter) {
        parallel_for(n, [&](std::size_t i) {
            const int xi = static_cast<int>(i % w);
            const int yi = static_cast<int>(i / w);
            const double ii = intensity[i];
            std::vector<double> message(k, 0.0);
            double total = 0.0;
            for (int yj = std::max(0, yi - reach_y); yj <= std::min(h - 1, yi + reach_y); ++yj) {
                const std::size_t row = static_cast<std::size_t>(yj - yi + h - 1) * span_x;
                for (int xj = std::max(0, xi - reach_x); xj <= std::min(w - 1, xi + reach_x); ++xj) {
                    const std::size_t j = static_cast<std::size_t>(yj) * w + xj;
                    if (j == i) {
                        continue;
                    }
                    const std::size_t off = row + static_cast<std::size_t>(xj - xi + w - 1);
                    const double di = intensity[j] - ii;
                    double kern = smooth[off];
                    const double e = bilateral_spatial[off] - di * di * ib;
                    if (params.w_bilateral > 0.0 && e > kExpUnderflow) {
                        kern += params.w_bilateral * std::exp(e);
                    }
                    if (kern == 0.0) {
                        continue;
                    }
                    total += kern;
                    for (std::size_t c = 0; c < k; ++c) {
                        message[c] += kern * q[j * k + c];
                    }
                }
            }
            // Potts: label c pays the kernel mass the other pixels put on labels != c
            auto out = std::span(next).subspan(i * k, k);
            for (std::size_t c = 0; c < k; ++c) {
                out[c] = -potential[i * k + c] - (total - message[c]);
            }
            normalize_exp(out);
        });
        q.swap(next);
    }
    return SoftMask(w, h, static_cast<int>(k), std::move(q));
}

} // namespace postdae::crf
