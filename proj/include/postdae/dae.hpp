#pragma once

#include "postdae/adam.hpp"
#include "postdae/checkpoint.hpp"
#include "postdae/degrade.hpp"
#include "postdae/ops.hpp"
#include "postdae/raster.hpp"
#include "postdae/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace postdae::dae {

/// Encoder/decoder topology. Each encoder stage halves the resolution with a
/// stride-2 conv (followed by a stride-1 conv except in the last stage); each
/// decoder stage doubles it with an upconv.
struct DaeConfig {
    int input_size = 64;
    int num_classes = 2;
    std::vector<int> encoder_widths = {16, 32, 32, 32, 32};
    int latent = 128;
    /// Channels of the decoder's first feature map after the expanding dense layer.
    int expand_channels = 64;
    std::vector<int> decoder_widths = {16, 16, 16, 16, 16};

    /// Spatial side of the encoder output.
    int bottleneck_size() const;
    /// Sigmoid with one output channel for two classes, softmax otherwise.
    bool sigmoid_head() const { return num_classes == 2; }
    int output_channels() const { return sigmoid_head() ? 1 : num_classes; }

    /// Throws ConfigError.
    void validate() const;

    /// Desk-scale defaults for any class count.
    static DaeConfig defaults(int num_classes, int input_size = 64);
};

void to_json(nlohmann::json& j, const DaeConfig& cfg);
void from_json(const nlohmann::json& j, DaeConfig& cfg);

struct TrainConfig {
    int epochs = 150;
    int batch_size = 8;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
    int checkpoint_interval = 0; ///< 0 disables interval checkpoints
    double dice_epsilon = 1.0;
    degrade::DegradationConfig degradation = degrade::training_preset();

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Parameters and topology of the encoder (f_enc) and decoder (f_dec).
/// Immutable after training; forward passes are safe to run concurrently.
class DaeModel {
public:
    const DaeConfig& config() const { return config_; }
    const std::vector<ad::LayerSpec>& layers() const { return specs_; }
    /// Weight and bias tensors in declaration order.
    std::vector<ad::Tensor> parameters() const;
    std::size_t parameter_count() const;

    /// Input [N,K,S,S] one-hot -> latent [N,latent].
    ad::Tensor encode(const ad::Tensor& input) const;
    /// Latent [N,latent] -> per-pixel probabilities [N,out,S,S].
    ad::Tensor decode(const ad::Tensor& latent) const;
    ad::Tensor forward(const ad::Tensor& input) const { return decode(encode(input)); }

    ad::Checkpoint to_checkpoint() const;
    /// Rebuilds the model and checks the layer table and tensor shapes.
    static DaeModel from_checkpoint(const ad::Checkpoint& ckpt);
    void save(const std::filesystem::path& path) const;
    static DaeModel load(const std::filesystem::path& path);

    friend DaeModel build_dae(const DaeConfig& cfg, std::uint64_t seed);

private:
    struct Layer {
        ad::LayerSpec spec;
        ad::Tensor weights;
        ad::Tensor bias;
    };
    ad::Tensor run(const ad::Tensor& x, std::size_t begin, std::size_t end) const;

    DaeConfig config_;
    std::vector<ad::LayerSpec> specs_;
    std::vector<Layer> layers_;
    std::size_t decoder_begin_ = 0;
};

/// He-uniform weights, zero biases; each layer seeded from (seed, layer index).
DaeModel build_dae(const DaeConfig& cfg, std::uint64_t seed);

/// One-hot network input [N,K,S,S] for a batch of masks.
ad::Tensor masks_to_input(std::span<const LabelMask> masks);
/// Training target: foreground indicator [N,1,S,S] for two classes, one-hot otherwise.
ad::Tensor masks_to_target(std::span<const LabelMask> masks);
/// Discretizes network output: threshold 0.5 for a sigmoid head, argmax otherwise.
std::vector<LabelMask> output_to_masks(const ad::Tensor& output, int num_classes);

/// Latent code of a single mask.
ad::Tensor encode(const DaeModel& model, const LabelMask& mask);

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> validation_loss;
};

struct TrainOptions {
    /// Fixed corrupted inputs and their clean targets, scored after every epoch.
    std::vector<LabelMask> validation_inputs;
    std::vector<LabelMask> validation_targets;
    /// Called after epochs that are multiples of checkpoint_interval.
    std::function<void(int epoch, const DaeModel&)> on_checkpoint;
    std::function<void(const EpochRecord&)> on_epoch;
    /// Starting weights; built from (dae config, train seed) when absent.
    std::optional<DaeModel> initial;
};

struct TrainResult {
    DaeModel model;
    std::vector<EpochRecord> history;
};

/// Denoising training: each step corrupts a shuffled minibatch afresh
/// (stream index epoch * N + sample), scores the reconstruction against the
/// clean targets with the soft Dice loss and takes one Adam step.
/// Throws TrainingError on a non-finite loss or gradient.
TrainResult train(std::span<const LabelMask> data, const TrainConfig& train_cfg, const DaeConfig& dae_cfg,
                  const TrainOptions& options = {});

/// Mean soft Dice loss of the model on fixed input/target pairs.
double evaluate_loss(const DaeModel& model, std::span<const LabelMask> inputs, std::span<const LabelMask> targets,
                     double dice_epsilon = 1.0, int batch_size = 16);

/// Projects a mask onto the learned shape manifold and back.
LabelMask postprocess(const DaeModel& model, const LabelMask& mask);
/// Discretizes with argmax first, then projects.
LabelMask postprocess(const DaeModel& model, const SoftMask& soft);
/// Batched form of postprocess(model, mask).
std::vector<LabelMask> postprocess_batch(const DaeModel& model, std::span<const LabelMask> masks,
                                         int batch_size = 16);

/// 1 - foreground Dice(mask, postprocess(mask)); 0 for a fixed point.
double plausibility_score(const DaeModel& model, const LabelMask& mask);

} // namespace postdae::dae
