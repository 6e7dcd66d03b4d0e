#pragma once

#include "postdae/raster.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace postdae::synth {

/// Procedural chest-like scene: two mirrored elongated "lungs" (class 1) and,
/// for three classes, a medial "heart" (class 2) drawn over them.
struct SceneConfig {
    int width = 64;
    int height = 64;
    int num_classes = 2;
    double center_jitter = 0.04;   ///< max center offset, fraction of canvas size
    double scale_jitter = 0.12;    ///< max relative change of each semi-axis
    double rotation_jitter = 0.05; ///< max lung tilt change, fraction of pi radians
    std::vector<double> class_means = {0.62, 0.30, 0.50}; ///< one mean intensity per class
    double noise_sigma = 0.08;
    double bias_amplitude = 0.12;
    std::uint64_t seed = 1;

    /// Throws ConfigError on invalid settings.
    void validate() const;
};

void to_json(nlohmann::json& j, const SceneConfig& cfg);
void from_json(const nlohmann::json& j, SceneConfig& cfg);

struct Scene {
    GrayImage image;
    LabelMask mask;
};

/// Pure function of (cfg, index). Rejects and resamples jittered geometry that
/// leaves the canvas, failing with GenerationError after 100 attempts.
Scene generate_scene(const SceneConfig& cfg, std::uint64_t index);

/// Per-pixel Gaussian intensity model with optional smoothing and label noise.
struct WeakClassifierParams {
    std::vector<double> means;
    std::vector<double> variances;
    int smoothing_radius = 0;
    double quality = 0.0; ///< 0 = clean posterior, 1 = uniform output
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const WeakClassifierParams& p);
void from_json(const nlohmann::json& j, WeakClassifierParams& p);

inline constexpr double kVarianceFloor = 1e-6;

/// Maximum-likelihood Gaussian per class over all labeled pixels.
/// Throws FittingError for empty input or a class with no pixels.
WeakClassifierParams fit_weak_classifier(std::span<const GrayImage> images, std::span<const LabelMask> masks);

/// Posterior under the class Gaussians (uniform prior), box-smoothed over
/// `smoothing_radius`, then mixed toward noise: with q = quality,
///   p' = (1 - q) p + q ((1 - q) u + q / K),
/// where u is a uniform random point on the probability simplex drawn per
/// pixel from the (params.seed, stream) random stream.
SoftMask weak_segment(const GrayImage& image, const WeakClassifierParams& params, std::uint64_t stream = 0);

} // namespace postdae::synth
