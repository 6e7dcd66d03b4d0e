#pragma once

#include "postdae/raster.hpp"

#include <json.hpp>

namespace postdae::crf {

/// Dense CRF kernel bandwidths and weights. Spatial bandwidths are in pixels
/// of the image being refined; theta_beta is on the [0,1] intensity scale.
struct CrfParams {
    double theta_alpha = 17.0;
    double theta_beta = 3.0 / 255.0;
    double theta_gamma = 3.0;
    double w_bilateral = 1.0;
    double w_smooth = 1.0;
    int iterations = 5;

    /// Throws ConfigError.
    void validate() const;

    /// Bandwidths tuned at 1024 px rescaled to a `size`-pixel canvas.
    static CrfParams for_size(int size);
};

void to_json(nlohmann::json& j, const CrfParams& p);
void from_json(const nlohmann::json& j, CrfParams& p);

inline constexpr double kUnaryFloor = 1e-8;

/// Mean-field inference with Potts compatibility and the sum of a bilateral
/// and a smoothness Gaussian kernel. Pairwise sums run over every other pixel.
/// Throws ContractError when unary and image sizes differ.
SoftMask meanfield_infer(const SoftMask& unary, const GrayImage& image, const CrfParams& params);

} // namespace postdae::crf
