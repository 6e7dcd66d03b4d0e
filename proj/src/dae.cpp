#include "postdae/dae.hpp"

#include "postdae/error.hpp"
#include "postdae/metrics.hpp"
#include "postdae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace postdae::dae {

using ad::LayerKind;
using ad::LayerSpec;
using ad::Tensor;

namespace {

bool is_power_of_two(int v)
{
    return v > 0 && (v & (v - 1)) == 0;
}

std::vector<LayerSpec> describe(const DaeConfig& cfg, std::size_t& decoder_begin)
{
    std::vector<LayerSpec> specs;
    const int b = cfg.bottleneck_size();
    int in = cfg.num_classes;
    const auto stages = cfg.encoder_widths.size();
    for (std::size_t i = 0; i < stages; ++i) {
        const int w = cfg.encoder_widths[i];
        specs.push_back({LayerKind::conv3x3, 2, in, w, 0});
        specs.push_back({LayerKind::relu, 1, w, w, 0});
        if (i + 1 < stages) {
            specs.push_back({LayerKind::conv3x3, 1, w, w, 0});
            specs.push_back({LayerKind::relu, 1, w, w, 0});
        }
        in = w;
    }
    const int flat = in * b * b;
    specs.push_back({LayerKind::dense, 1, flat, cfg.latent, cfg.latent});
    decoder_begin = specs.size();

    const int expanded = cfg.expand_channels * b * b;
    specs.push_back({LayerKind::dense, 1, cfg.latent, expanded, expanded});
    specs.push_back({LayerKind::relu, 1, expanded, expanded, 0});
    in = cfg.expand_channels;
    const auto up = cfg.decoder_widths.size();
    for (std::size_t j = 0; j < up; ++j) {
        const int w = cfg.decoder_widths[j];
        specs.push_back({LayerKind::upconv, 1, in, w, 0});
        specs.push_back({LayerKind::relu, 1, w, w, 0});
        // the last stage hands its upconv features straight to the head
        if (j + 1 < up) {
            specs.push_back({LayerKind::conv3x3, 1, w, w, 0});
            specs.push_back({LayerKind::relu, 1, w, w, 0});
        }
        in = w;
    }
    const int out = cfg.output_channels();
    specs.push_back({LayerKind::conv3x3, 1, in, out, 0});
    if (cfg.sigmoid_head()) {
        specs.push_back({LayerKind::sigmoid, 1, out, out, 0});
    } else {
        specs.push_back({LayerKind::softmax_channels, 1, out, out, 0});
    }
    return specs;
}

std::vector<std::uint32_t> config_words(const DaeConfig& cfg)
{
    std::vector<std::uint32_t> w{static_cast<std::uint32_t>(cfg.input_size),
                                 static_cast<std::uint32_t>(cfg.num_classes), static_cast<std::uint32_t>(cfg.latent),
                                 static_cast<std::uint32_t>(cfg.expand_channels),
                                 static_cast<std::uint32_t>(cfg.encoder_widths.size())};
    for (int v : cfg.encoder_widths) {
        w.push_back(static_cast<std::uint32_t>(v));
    }
    w.push_back(static_cast<std::uint32_t>(cfg.decoder_widths.size()));
    for (int v : cfg.decoder_widths) {
        w.push_back(static_cast<std::uint32_t>(v));
    }
    return w;
}

DaeConfig config_from_words(std::span<const std::uint32_t> w)
{
    auto at = [&](std::size_t i) -> int {
        if (i >= w.size()) {
            throw FormatError("checkpoint: model configuration block is truncated");
        }
        return static_cast<int>(w[i]);
    };
    DaeConfig cfg;
    cfg.input_size = at(0);
    cfg.num_classes = at(1);
    cfg.latent = at(2);
    cfg.expand_channels = at(3);
    const auto enc = static_cast<std::size_t>(at(4));
    cfg.encoder_widths.clear();
    for (std::size_t i = 0; i < enc; ++i) {
        cfg.encoder_widths.push_back(at(5 + i));
    }
    const auto dec = static_cast<std::size_t>(at(5 + enc));
    cfg.decoder_widths.clear();
    for (std::size_t i = 0; i < dec; ++i) {
        cfg.decoder_widths.push_back(at(6 + enc + i));
    }
    if (6 + enc + dec != w.size()) {
        throw FormatError("checkpoint: model configuration block has trailing words");
    }
    return cfg;
}

void check_masks(std::span<const LabelMask> masks, const DaeConfig& cfg, const char* what)
{
    for (const auto& m : masks) {
        if (m.width() != cfg.input_size || m.height() != cfg.input_size) {
            throw ContractError(std::string(what) + ": mask is " + std::to_string(m.width()) + "x" +
                                std::to_string(m.height()) + ", model expects " + std::to_string(cfg.input_size) +
                                "x" + std::to_string(cfg.input_size));
        }
        if (m.num_classes() != cfg.num_classes) {
            throw ContractError(std::string(what) + ": mask has " + std::to_string(m.num_classes()) +
                                " classes, model expects " + std::to_string(cfg.num_classes));
        }
    }
}

} // namespace

// --- configuration ----------------------------------------------------------

int DaeConfig::bottleneck_size() const
{
    return input_size >> encoder_widths.size();
}

void DaeConfig::validate() const
{
    if (!is_power_of_two(input_size) || input_size < 4) {
        throw ConfigError("DAE input size must be a power of two >= 4");
    }
    if (num_classes < 2 || num_classes > 256) {
        throw ConfigError("DAE num_classes must be in [2, 256]");
    }
    if (encoder_widths.empty() || encoder_widths.size() > 30 || bottleneck_size() < 2) {
        throw ConfigError("encoder must have between 1 and log2(input/2) stride-2 stages so the bottleneck is >= 2x2");
    }
    if (decoder_widths.size() != encoder_widths.size()) {
        throw ConfigError("decoder must have as many upsampling stages as the encoder has stride-2 stages");
    }
    auto positive = [](const std::vector<int>& v) { return std::all_of(v.begin(), v.end(), [](int x) { return x > 0; }); };
    if (!positive(encoder_widths) || !positive(decoder_widths) || latent <= 0 || expand_channels <= 0) {
        throw ConfigError("layer widths must be positive");
    }
}

DaeConfig DaeConfig::defaults(int num_classes, int input_size)
{
    DaeConfig cfg;
    cfg.input_size = input_size;
    cfg.num_classes = num_classes;
    return cfg;
}

void to_json(nlohmann::json& j, const DaeConfig& cfg)
{
    j = nlohmann::json{{"input_size", cfg.input_size},         {"num_classes", cfg.num_classes},
                       {"encoder_widths", cfg.encoder_widths}, {"latent", cfg.latent},
                       {"expand_channels", cfg.expand_channels}, {"decoder_widths", cfg.decoder_widths}};
}

void from_json(const nlohmann::json& j, DaeConfig& cfg)
{
    const auto d = DaeConfig::defaults(j.value("num_classes", 2), j.value("input_size", 64));
    cfg.input_size = d.input_size;
    cfg.num_classes = d.num_classes;
    cfg.encoder_widths = j.value("encoder_widths", d.encoder_widths);
    cfg.latent = j.value("latent", d.latent);
    cfg.expand_channels = j.value("expand_channels", d.expand_channels);
    cfg.decoder_widths = j.value("decoder_widths", d.decoder_widths);
}

void TrainConfig::validate() const
{
    if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0)) {
        throw ConfigError("training needs epochs >= 1, batch size >= 1 and a positive learning rate");
    }
    if (checkpoint_interval < 0) {
        throw ConfigError("checkpoint interval must be non-negative");
    }
    if (!(dice_epsilon > 0.0)) {
        throw ConfigError("dice epsilon must be positive");
    }
    degradation.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& cfg)
{
    j = nlohmann::json{{"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"learning_rate", cfg.learning_rate},
                       {"seed", cfg.seed},
                       {"checkpoint_interval", cfg.checkpoint_interval},
                       {"dice_epsilon", cfg.dice_epsilon},
                       {"degradation", cfg.degradation}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg)
{
    const TrainConfig d;
    cfg.epochs = j.value("epochs", d.epochs);
    cfg.batch_size = j.value("batch_size", d.batch_size);
    cfg.learning_rate = j.value("learning_rate", d.learning_rate);
    cfg.seed = j.value("seed", d.seed);
    cfg.checkpoint_interval = j.value("checkpoint_interval", d.checkpoint_interval);
    cfg.dice_epsilon = j.value("dice_epsilon", d.dice_epsilon);
    cfg.degradation = j.contains("degradation") ? j.at("degradation").get<degrade::DegradationConfig>() : d.degradation;
}

// --- model ------------------------------------------------------------------

DaeModel build_dae(const DaeConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    DaeModel model;
    model.config_ = cfg;
    model.specs_ = describe(cfg, model.decoder_begin_);
    for (std::size_t i = 0; i < model.specs_.size(); ++i) {
        const auto& spec = model.specs_[i];
        DaeModel::Layer layer{spec, {}, {}};
        if (spec.has_parameters()) {
            ad::Shape shape;
            std::size_t fan_in = 0;
            if (spec.kind == LayerKind::dense) {
                shape = {static_cast<std::size_t>(spec.in_channels), static_cast<std::size_t>(spec.out_channels)};
                fan_in = static_cast<std::size_t>(spec.in_channels);
            } else {
                shape = {static_cast<std::size_t>(spec.out_channels), static_cast<std::size_t>(spec.in_channels), 3, 3};
                fan_in = static_cast<std::size_t>(spec.in_channels) * 9;
            }
            Rng rng(seed, i, stream::init);
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
            std::vector<double> w(ad::numel(shape));
            for (auto& v : w) {
                v = rng.uniform(-limit, limit);
            }
            layer.weights = Tensor(shape, std::move(w), true);
            layer.bias = Tensor::zeros({static_cast<std::size_t>(spec.out_channels)}, true);
        }
        model.layers_.push_back(std::move(layer));
    }
    return model;
}

std::vector<Tensor> DaeModel::parameters() const
{
    std::vector<Tensor> out;
    for (const auto& l : layers_) {
        if (l.spec.has_parameters()) {
            out.push_back(l.weights);
            out.push_back(l.bias);
        }
    }
    return out;
}

std::size_t DaeModel::parameter_count() const
{
    std::size_t total = 0;
    for (const auto& p : parameters()) {
        total += p.size();
    }
    return total;
}

Tensor DaeModel::run(const Tensor& input, std::size_t begin, std::size_t end) const
{
    Tensor x = input;
    for (std::size_t i = begin; i < end; ++i) {
        const auto& l = layers_[i];
        const auto n = x.dim(0);
        switch (l.spec.kind) {
        case LayerKind::dense:
            if (x.rank() != 2) {
                x = ad::reshape(x, {n, x.size() / n});
            }
            x = ad::dense(x, l.weights, l.bias);
            break;
        case LayerKind::conv3x3:
        case LayerKind::upconv:
        case LayerKind::maxpool2x2:
            if (x.rank() == 2) {
                const auto c = static_cast<std::size_t>(l.spec.in_channels);
                const auto side = static_cast<std::size_t>(std::lround(std::sqrt(double(x.dim(1) / c))));
                x = ad::reshape(x, {n, c, side, side});
            }
            if (l.spec.kind == LayerKind::conv3x3) {
                x = ad::conv2d(x, l.weights, l.bias, l.spec.stride);
            } else if (l.spec.kind == LayerKind::upconv) {
                x = ad::upconv(x, l.weights, l.bias);
            } else {
                x = ad::maxpool2x2(x);
            }
            break;
        case LayerKind::relu: x = ad::relu(x); break;
        case LayerKind::sigmoid: x = ad::sigmoid(x); break;
        case LayerKind::softmax_channels: x = ad::softmax_channels(x); break;
        }
    }
    return x;
}

Tensor DaeModel::encode(const Tensor& input) const
{
    if (input.rank() != 4 || input.dim(1) != static_cast<std::size_t>(config_.num_classes) ||
        input.dim(2) != static_cast<std::size_t>(config_.input_size) ||
        input.dim(3) != static_cast<std::size_t>(config_.input_size)) {
        throw ContractError("DAE input must be [N," + std::to_string(config_.num_classes) + "," +
                            std::to_string(config_.input_size) + "," + std::to_string(config_.input_size) +
                            "], got " + ad::shape_string(input.shape()));
    }
    return run(input, 0, decoder_begin_);
}

Tensor DaeModel::decode(const Tensor& latent) const
{
    if (latent.rank() != 2 || latent.dim(1) != static_cast<std::size_t>(config_.latent)) {
        throw ContractError("DAE latent must be [N," + std::to_string(config_.latent) + "]");
    }
    return run(latent, decoder_begin_, layers_.size());
}

ad::Checkpoint DaeModel::to_checkpoint() const
{
    return {config_words(config_), specs_, parameters()};
}

DaeModel DaeModel::from_checkpoint(const ad::Checkpoint& ckpt)
{
    const auto cfg = config_from_words(ckpt.config);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: invalid model configuration: ") + e.what());
    }
    DaeModel model = build_dae(cfg, 0);
    if (ckpt.layers != model.specs_) {
        throw FormatError("checkpoint: layer table does not match the stored configuration");
    }
    auto params = model.parameters();
    if (ckpt.tensors.size() != params.size()) {
        throw FormatError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                          std::to_string(ckpt.tensors.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (ckpt.tensors[i].shape() != params[i].shape()) {
            throw FormatError("checkpoint: tensor " + std::to_string(i) + " has shape " +
                              ad::shape_string(ckpt.tensors[i].shape()) + ", expected " +
                              ad::shape_string(params[i].shape()));
        }
        std::copy(ckpt.tensors[i].data().begin(), ckpt.tensors[i].data().end(), params[i].mutable_data().begin());
    }
    return model;
}

void DaeModel::save(const std::filesystem::path& path) const
{
    ad::save_checkpoint(to_checkpoint(), path);
}

DaeModel DaeModel::load(const std::filesystem::path& path)
{
    return from_checkpoint(ad::load_checkpoint(path));
}

// --- tensors <-> masks ------------------------------------------------------

Tensor masks_to_input(std::span<const LabelMask> masks)
{
    if (masks.empty()) {
        throw ContractError("masks_to_input: empty batch");
    }
    const auto& first = masks.front();
    const auto k = static_cast<std::size_t>(first.num_classes());
    const auto plane = first.size();
    std::vector<double> data(masks.size() * k * plane, 0.0);
    for (std::size_t n = 0; n < masks.size(); ++n) {
        if (masks[n].width() != first.width() || masks[n].height() != first.height() ||
            masks[n].num_classes() != first.num_classes()) {
            throw ContractError("masks_to_input: batch masks disagree in shape or classes");
        }
        const auto labels = masks[n].labels();
        for (std::size_t p = 0; p < plane; ++p) {
            data[(n * k + labels[p]) * plane + p] = 1.0;
        }
    }
    return Tensor({masks.size(), k, static_cast<std::size_t>(first.height()), static_cast<std::size_t>(first.width())},
                  std::move(data));
}

Tensor masks_to_target(std::span<const LabelMask> masks)
{
    if (masks.empty()) {
        throw ContractError("masks_to_target: empty batch");
    }
    if (masks.front().num_classes() != 2) {
        return masks_to_input(masks);
    }
    const auto& first = masks.front();
    const auto plane = first.size();
    std::vector<double> data(masks.size() * plane, 0.0);
    for (std::size_t n = 0; n < masks.size(); ++n) {
        if (masks[n].width() != first.width() || masks[n].height() != first.height()) {
            throw ContractError("masks_to_target: batch masks disagree in shape");
        }
        const auto labels = masks[n].labels();
        for (std::size_t p = 0; p < plane; ++p) {
            data[n * plane + p] = labels[p] == 1 ? 1.0 : 0.0;
        }
    }
    return Tensor({masks.size(), 1, static_cast<std::size_t>(first.height()), static_cast<std::size_t>(first.width())},
                  std::move(data));
}

std::vector<LabelMask> output_to_masks(const Tensor& output, int num_classes)
{
    if (output.rank() != 4) {
        throw ContractError("output_to_masks: expected [N,C,H,W]");
    }
    const auto n = output.dim(0);
    const auto c = output.dim(1);
    const auto h = static_cast<int>(output.dim(2));
    const auto w = static_cast<int>(output.dim(3));
    const auto plane = static_cast<std::size_t>(h) * w;
    const bool sigmoid_head = num_classes == 2 && c == 1;
    if (!sigmoid_head && c != static_cast<std::size_t>(num_classes)) {
        throw ContractError("output_to_masks: channel count does not match class count");
    }
    const auto data = output.data();
    std::vector<LabelMask> out;
    for (std::size_t b = 0; b < n; ++b) {
        LabelMask m(w, h, num_classes);
        auto labels = MaskEditor(m).labels();
        for (std::size_t p = 0; p < plane; ++p) {
            if (sigmoid_head) {
                labels[p] = data[b * plane + p] >= 0.5 ? 1 : 0;
            } else {
                std::size_t best = 0;
                for (std::size_t ch = 1; ch < c; ++ch) {
                    if (data[(b * c + ch) * plane + p] > data[(b * c + best) * plane + p]) {
                        best = ch;
                    }
                }
                labels[p] = static_cast<std::uint8_t>(best);
            }
        }
        out.push_back(std::move(m));
    }
    return out;
}

Tensor encode(const DaeModel& model, const LabelMask& mask)
{
    check_masks(std::span(&mask, 1), model.config(), "encode");
    ad::NoGradGuard guard;
    return model.encode(masks_to_input(std::span(&mask, 1)));
}

// --- training ---------------------------------------------------------------

double evaluate_loss(const DaeModel& model, std::span<const LabelMask> inputs, std::span<const LabelMask> targets,
                     double dice_epsilon, int batch_size)
{
    if (inputs.size() != targets.size() || inputs.empty()) {
        throw ContractError("evaluate_loss: inputs and targets must be aligned and nonempty");
    }
    ad::NoGradGuard guard;
    double total = 0.0;
    const auto step = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t i = 0; i < inputs.size(); i += step) {
        const auto len = std::min(step, inputs.size() - i);
        const auto out = model.forward(masks_to_input(inputs.subspan(i, len)));
        total += ad::soft_dice_loss(out, masks_to_target(targets.subspan(i, len)), dice_epsilon).item() *
                 static_cast<double>(len);
    }
    return total / static_cast<double>(inputs.size());
}

TrainResult train(std::span<const LabelMask> data, const TrainConfig& train_cfg, const DaeConfig& dae_cfg,
                  const TrainOptions& options)
{
    train_cfg.validate();
    dae_cfg.validate();
    if (data.empty()) {
        throw ContractError("train: empty dataset");
    }
    check_masks(data, dae_cfg, "train");
    check_masks(options.validation_inputs, dae_cfg, "train (validation)");
    check_masks(options.validation_targets, dae_cfg, "train (validation)");
    if (options.validation_inputs.size() != options.validation_targets.size()) {
        throw ContractError("train: validation inputs and targets differ in length");
    }

    TrainResult result{options.initial ? *options.initial : build_dae(dae_cfg, train_cfg.seed), {}};
    if (options.initial && !(options.initial->config().input_size == dae_cfg.input_size &&
                             options.initial->config().num_classes == dae_cfg.num_classes)) {
        throw ContractError("train: initial model does not match the DAE configuration");
    }
    auto params = result.model.parameters();
    ad::AdamState adam;
    adam.learning_rate = train_cfg.learning_rate;

    auto corruption = train_cfg.degradation;
    corruption.seed = splitmix64(train_cfg.seed ^ 0x7472616e ^ splitmix64(corruption.seed));

    const std::size_t n = data.size();
    const auto batch = static_cast<std::size_t>(train_cfg.batch_size);
    std::vector<std::size_t> order(n);
    std::vector<LabelMask> inputs;
    std::vector<LabelMask> targets;

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(train_cfg.seed, static_cast<std::uint64_t>(epoch), stream::shuffle);
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }

        double loss_sum = 0.0;
        int step = 0;
        for (std::size_t start = 0; start < n; start += batch, ++step) {
            const auto len = std::min(batch, n - start);
            inputs.clear();
            targets.clear();
            for (std::size_t k = 0; k < len; ++k) {
                const auto idx = order[start + k];
                auto pair = degrade::degrade_pair(data[idx], corruption,
                                                  static_cast<std::uint64_t>(epoch - 1) * n + idx);
                inputs.push_back(std::move(pair.input));
                targets.push_back(std::move(pair.target));
            }
            for (auto& p : params) {
                p.zero_grad();
            }
            const auto out = result.model.forward(masks_to_input(inputs));
            const auto loss = ad::soft_dice_loss(out, masks_to_target(targets), train_cfg.dice_epsilon);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(step));
            }
            loss.backward();
            try {
                ad::adam_step(params, adam);
            } catch (const TrainingError& e) {
                throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(step) + ")");
            }
            loss_sum += value * static_cast<double>(len);
        }

        EpochRecord record{epoch, loss_sum / static_cast<double>(n), std::nullopt};
        if (!options.validation_inputs.empty()) {
            record.validation_loss = evaluate_loss(result.model, options.validation_inputs, options.validation_targets,
                                                   train_cfg.dice_epsilon, train_cfg.batch_size);
        }
        result.history.push_back(record);
        if (options.on_epoch) {
            options.on_epoch(record);
        }
        if (train_cfg.checkpoint_interval > 0 && epoch % train_cfg.checkpoint_interval == 0 && options.on_checkpoint) {
            options.on_checkpoint(epoch, result.model);
        }
    }
    for (auto& p : params) {
        p.zero_grad();
    }
    return result;
}

// --- post-processing --------------------------------------------------------

std::vector<LabelMask> postprocess_batch(const DaeModel& model, std::span<const LabelMask> masks, int batch_size)
{
    check_masks(masks, model.config(), "postprocess");
    ad::NoGradGuard guard;
    std::vector<LabelMask> out;
    out.reserve(masks.size());
    const auto step = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t i = 0; i < masks.size(); i += step) {
        const auto len = std::min(step, masks.size() - i);
        auto chunk = output_to_masks(model.forward(masks_to_input(masks.subspan(i, len))), model.config().num_classes);
        for (auto& m : chunk) {
            out.push_back(std::move(m));
        }
    }
    return out;
}

LabelMask postprocess(const DaeModel& model, const LabelMask& mask)
{
    return std::move(postprocess_batch(model, std::span(&mask, 1)).front());
}

LabelMask postprocess(const DaeModel& model, const SoftMask& soft)
{
    return postprocess(model, argmax_labels(soft));
}

double plausibility_score(const DaeModel& model, const LabelMask& mask)
{
    return 1.0 - metrics::foreground_dice(mask, postprocess(model, mask));
}

} // namespace postdae::dae
