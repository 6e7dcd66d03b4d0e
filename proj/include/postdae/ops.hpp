#pragma once

#include "postdae/tensor.hpp"

#include <cstdint>
#include <string>

namespace postdae::ad {

/// Cross-correlation with zero padding k/2 on each side. Kernel sizes 1 and 3.
/// input [N,C,H,W], weights [K,C,k,k], bias [K] -> [N,K,ceil(H/s),ceil(W/s)].
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride = 1);

/// 2x2 window, stride 2. Gradient goes to the first maximum in row-major order.
Tensor maxpool2x2(const Tensor& input);

/// Nearest-neighbour 2x upsampling of [N,C,H,W].
Tensor upsample2x(const Tensor& input);

/// Nearest-neighbour 2x upsampling followed by a stride-1 3x3 convolution.
Tensor upconv(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// input [N,D], weights [D,U], bias [U] -> [N,U].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Softmax over axis 1 independently for every other index.
Tensor softmax_channels(const Tensor& x);

/// Same data, new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);

/// Soft Dice loss 1 - (2 Σ p t + eps) / (Σ p + Σ t + eps), computed per sample
/// and per foreground channel, then averaged. With a single channel that
/// channel is the foreground; otherwise channels 1..C-1 are. `target` carries
/// no gradient.
Tensor soft_dice_loss(const Tensor& pred, const Tensor& target, double eps = 1.0);

/// Sum of all elements (scalar).
Tensor sum(const Tensor& x);
/// Elementwise a * b (same shapes).
Tensor mul(const Tensor& a, const Tensor& b);

enum class LayerKind : std::uint8_t { conv3x3 = 0, maxpool2x2 = 1, upconv = 2, dense = 3, relu = 4, sigmoid = 5, softmax_channels = 6 };

std::string to_string(LayerKind kind);

/// One row of a network description.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int stride = 1;
    int in_channels = 0;  ///< input width for dense layers
    int out_channels = 0; ///< output width for dense layers
    int units = 0;        ///< dense only

    bool has_parameters() const
    {
        return kind == LayerKind::conv3x3 || kind == LayerKind::upconv || kind == LayerKind::dense;
    }
    /// Throws ContractError when the row is inconsistent.
    void validate() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

} // namespace postdae::ad
