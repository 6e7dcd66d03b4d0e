#include "postdae/synth.hpp"

#include "postdae/error.hpp"
#include "postdae/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace postdae::synth {

namespace {

constexpr int kMaxAttempts = 100;

// Canonical anatomy in canvas fractions.
constexpr double kLungOffsetX = 0.20;
constexpr double kLungCenterY = 0.50;
constexpr double kLungSemiX = 0.13;
constexpr double kLungSemiY = 0.32;
constexpr double kLungTilt = 0.06; // radians, lungs lean outward at the top
constexpr double kHeartCenterX = 0.53;
constexpr double kHeartCenterY = 0.66;
constexpr double kHeartSemiX = 0.15;
constexpr double kHeartSemiY = 0.12;
constexpr double kHeartTilt = -0.25;

struct Ellipse {
    double cx, cy; // pixels
    double ax, ay; // semi-axes, pixels
    double angle;  // radians

    bool contains(double x, double y) const
    {
        const double dx = x - cx;
        const double dy = y - cy;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = (dx * c + dy * s) / ax;
        const double v = (-dx * s + dy * c) / ay;
        return u * u + v * v <= 1.0;
    }

    // Half extents of the axis-aligned bounding box.
    std::pair<double, double> half_extent() const
    {
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        return {std::sqrt(ax * ax * c * c + ay * ay * s * s), std::sqrt(ax * ax * s * s + ay * ay * c * c)};
    }

    bool inside(int w, int h) const
    {
        const auto [hx, hy] = half_extent();
        return cx - hx >= 0.5 && cx + hx <= w - 0.5 && cy - hy >= 0.5 && cy + hy <= h - 0.5;
    }
};

struct Jitter {
    double dx = 0.0, dy = 0.0;       // fractions of canvas
    double sx = 1.0, sy = 1.0;       // lung semi-axis scales
    double tilt = 0.0;               // radians added to the lung tilt
    double hdx = 0.0, hdy = 0.0;     // heart offset, fractions
    double hsx = 1.0, hsy = 1.0;     // heart semi-axis scales
};

struct Anatomy {
    Ellipse left;
    Ellipse right;
    Ellipse heart;
};

Anatomy place(const SceneConfig& cfg, const Jitter& j)
{
    const double w = cfg.width;
    const double h = cfg.height;
    const double cx = (0.5 + j.dx) * w;
    const double cy = (kLungCenterY + j.dy) * h;
    const double ax = kLungSemiX * j.sx * w;
    const double ay = kLungSemiY * j.sy * h;
    const double tilt = kLungTilt + j.tilt;
    Anatomy a;
    a.right = {cx + kLungOffsetX * w, cy, ax, ay, -tilt};
    a.left = {cx - kLungOffsetX * w, cy, ax, ay, tilt};
    a.heart = {(kHeartCenterX + j.dx + j.hdx) * w, (kHeartCenterY + j.dy + j.hdy) * h, kHeartSemiX * j.hsx * w,
               kHeartSemiY * j.hsy * h, kHeartTilt};
    return a;
}

bool fits(const SceneConfig& cfg, const Anatomy& a)
{
    if (!a.left.inside(cfg.width, cfg.height) || !a.right.inside(cfg.width, cfg.height)) {
        return false;
    }
    return cfg.num_classes < 3 || a.heart.inside(cfg.width, cfg.height);
}

Jitter sample_jitter(const SceneConfig& cfg, Rng& rng)
{
    Jitter j;
    j.dx = rng.uniform(-1.0, 1.0) * cfg.center_jitter;
    j.dy = rng.uniform(-1.0, 1.0) * cfg.center_jitter;
    j.sx = 1.0 + rng.uniform(-1.0, 1.0) * cfg.scale_jitter;
    j.sy = 1.0 + rng.uniform(-1.0, 1.0) * cfg.scale_jitter;
    j.tilt = rng.uniform(-1.0, 1.0) * cfg.rotation_jitter * std::numbers::pi;
    j.hdx = rng.uniform(-0.5, 0.5) * cfg.center_jitter;
    j.hdy = rng.uniform(-0.5, 0.5) * cfg.center_jitter;
    j.hsx = 1.0 + rng.uniform(-1.0, 1.0) * cfg.scale_jitter;
    j.hsy = 1.0 + rng.uniform(-1.0, 1.0) * cfg.scale_jitter;
    return j;
}

LabelMask rasterize(const SceneConfig& cfg, const Anatomy& a)
{
    LabelMask mask(cfg.width, cfg.height, cfg.num_classes);
    auto labels = MaskEditor(mask).labels();
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            std::uint8_t label = 0;
            if (a.left.contains(px, py) || a.right.contains(px, py)) {
                label = 1;
            }
            if (cfg.num_classes >= 3 && a.heart.contains(px, py)) {
                label = 2;
            }
            labels[mask.index(x, y)] = label;
        }
    }
    return mask;
}

GrayImage render(const SceneConfig& cfg, const LabelMask& mask, std::uint64_t index)
{
    Rng rng(cfg.seed, index, stream::scene_noise);
    // low-frequency bias: a tilted ramp plus one slow sinusoid per axis
    const double ramp_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double fx = rng.uniform(0.5, 1.0);
    const double fy = rng.uniform(0.5, 1.0);
    const double phx = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phy = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> data(mask.size());
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const double u = (x + 0.5) / cfg.width - 0.5;
            const double v = (y + 0.5) / cfg.height - 0.5;
            const double ramp = 2.0 * (u * std::cos(ramp_angle) + v * std::sin(ramp_angle));
            const double wave = 0.5 * std::sin(2.0 * std::numbers::pi * fx * u + phx) +
                                0.5 * std::sin(2.0 * std::numbers::pi * fy * v + phy);
            const double bias = cfg.bias_amplitude * 0.5 * (ramp + wave);
            const double noise = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * rng.normal() : 0.0;
            const double value = cfg.class_means[mask.at(x, y)] + bias + noise;
            data[mask.index(x, y)] = std::clamp(value, 0.0, 1.0);
        }
    }
    return GrayImage(cfg.width, cfg.height, std::move(data));
}

} // namespace

void SceneConfig::validate() const
{
    if (width < 16 || height < 16) {
        throw ConfigError("scene canvas must be at least 16x16");
    }
    if (num_classes != 2 && num_classes != 3) {
        throw ConfigError("scene num_classes must be 2 or 3");
    }
    if (static_cast<int>(class_means.size()) < num_classes) {
        throw ConfigError("class_means needs one entry per class");
    }
    for (int a = 0; a < num_classes; ++a) {
        if (class_means[a] < 0.0 || class_means[a] > 1.0) {
            throw ConfigError("class means must lie in [0, 1]");
        }
        for (int b = a + 1; b < num_classes; ++b) {
            if (std::abs(class_means[a] - class_means[b]) < 0.05) {
                throw ConfigError("class intensity means must differ pairwise by at least 0.05");
            }
        }
    }
    if (center_jitter < 0.0 || scale_jitter < 0.0 || scale_jitter >= 1.0 || rotation_jitter < 0.0) {
        throw ConfigError("jitter amplitudes must be non-negative (scale jitter below 1)");
    }
    if (noise_sigma < 0.0 || bias_amplitude < 0.0) {
        throw ConfigError("noise sigma and bias amplitude must be non-negative");
    }
    // worst-case geometry must still fit
    for (const double sign_x : {-1.0, 1.0}) {
        for (const double sign_y : {-1.0, 1.0}) {
            for (const double sign_t : {-1.0, 1.0}) {
                Jitter j;
                j.dx = sign_x * center_jitter;
                j.dy = sign_y * center_jitter;
                j.sx = j.sy = j.hsx = j.hsy = 1.0 + scale_jitter;
                j.tilt = sign_t * rotation_jitter * std::numbers::pi;
                j.hdx = sign_x * 0.5 * center_jitter;
                j.hdy = sign_y * 0.5 * center_jitter;
                if (!fits(*this, place(*this, j))) {
                    throw ConfigError("jitter amplitudes allow shapes to leave the canvas");
                }
            }
        }
    }
}

void to_json(nlohmann::json& j, const SceneConfig& cfg)
{
    j = nlohmann::json{{"width", cfg.width},
                       {"height", cfg.height},
                       {"num_classes", cfg.num_classes},
                       {"center_jitter", cfg.center_jitter},
                       {"scale_jitter", cfg.scale_jitter},
                       {"rotation_jitter", cfg.rotation_jitter},
                       {"class_means", cfg.class_means},
                       {"noise_sigma", cfg.noise_sigma},
                       {"bias_amplitude", cfg.bias_amplitude},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SceneConfig& cfg)
{
    SceneConfig d;
    cfg.width = j.value("width", d.width);
    cfg.height = j.value("height", d.height);
    cfg.num_classes = j.value("num_classes", d.num_classes);
    cfg.center_jitter = j.value("center_jitter", d.center_jitter);
    cfg.scale_jitter = j.value("scale_jitter", d.scale_jitter);
    cfg.rotation_jitter = j.value("rotation_jitter", d.rotation_jitter);
    cfg.class_means = j.value("class_means", d.class_means);
    cfg.noise_sigma = j.value("noise_sigma", d.noise_sigma);
    cfg.bias_amplitude = j.value("bias_amplitude", d.bias_amplitude);
    cfg.seed = j.value("seed", d.seed);
}

Scene generate_scene(const SceneConfig& cfg, std::uint64_t index)
{
    cfg.validate();
    Rng rng(cfg.seed, index, stream::scene);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const auto anatomy = place(cfg, sample_jitter(cfg, rng));
        if (!fits(cfg, anatomy)) {
            continue;
        }
        auto mask = rasterize(cfg, anatomy);
        auto image = render(cfg, mask, index);
        return {std::move(image), std::move(mask)};
    }
    throw GenerationError("scene " + std::to_string(index) + ": anatomy left the canvas in " +
                          std::to_string(kMaxAttempts) + " attempts");
}

// --- weak classifier --------------------------------------------------------

void WeakClassifierParams::validate() const
{
    if (means.size() < 2 || means.size() != variances.size()) {
        throw ConfigError("weak classifier needs matching means/variances for at least two classes");
    }
    for (double v : variances) {
        if (!(v > 0.0)) {
            throw ConfigError("weak classifier variances must be positive");
        }
    }
    if (!(quality >= 0.0 && quality <= 1.0)) {
        throw ConfigError("weak classifier quality knob must lie in [0, 1]");
    }
    if (smoothing_radius < 0) {
        throw ConfigError("smoothing radius must be non-negative");
    }
}

void to_json(nlohmann::json& j, const WeakClassifierParams& p)
{
    j = nlohmann::json{{"means", p.means},
                       {"variances", p.variances},
                       {"smoothing_radius", p.smoothing_radius},
                       {"quality", p.quality},
                       {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, WeakClassifierParams& p)
{
    p.means = j.at("means").get<std::vector<double>>();
    p.variances = j.at("variances").get<std::vector<double>>();
    p.smoothing_radius = j.value("smoothing_radius", 0);
    p.quality = j.value("quality", 0.0);
    p.seed = j.value("seed", std::uint64_t{0});
}

WeakClassifierParams fit_weak_classifier(std::span<const GrayImage> images, std::span<const LabelMask> masks)
{
    if (images.empty() || masks.empty()) {
        throw FittingError("cannot fit the weak classifier on an empty dataset");
    }
    if (images.size() != masks.size()) {
        throw FittingError("image and mask lists differ in length");
    }
    const int k = masks.front().num_classes();
    std::vector<double> sum(k, 0.0);
    std::vector<double> count(k, 0.0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].width() != masks[i].width() || images[i].height() != masks[i].height()) {
            throw FittingError("image/mask dimension mismatch at item " + std::to_string(i));
        }
        if (masks[i].num_classes() != k) {
            throw FittingError("masks disagree on the number of classes");
        }
        const auto px = images[i].intensities();
        const auto lb = masks[i].labels();
        for (std::size_t p = 0; p < px.size(); ++p) {
            sum[lb[p]] += px[p];
            count[lb[p]] += 1.0;
        }
    }
    WeakClassifierParams params;
    params.means.resize(k);
    params.variances.assign(k, 0.0);
    for (int c = 0; c < k; ++c) {
        if (count[c] == 0.0) {
            throw FittingError("class " + std::to_string(c) + " is absent from every mask");
        }
        params.means[c] = sum[c] / count[c];
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto px = images[i].intensities();
        const auto lb = masks[i].labels();
        for (std::size_t p = 0; p < px.size(); ++p) {
            const double d = px[p] - params.means[lb[p]];
            params.variances[lb[p]] += d * d;
        }
    }
    for (int c = 0; c < k; ++c) {
        params.variances[c] = std::max(params.variances[c] / count[c], kVarianceFloor);
    }
    return params;
}

SoftMask weak_segment(const GrayImage& image, const WeakClassifierParams& params, std::uint64_t stream_index)
{
    params.validate();
    const int k = static_cast<int>(params.means.size());
    const int w = image.width();
    const int h = image.height();
    const std::size_t n = image.size();
    std::vector<double> post(n * k);
    const auto px = image.intensities();
    std::vector<double> loglik(k);
    for (std::size_t p = 0; p < n; ++p) {
        double best = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            const double d = px[p] - params.means[c];
            loglik[c] = -0.5 * std::log(2.0 * std::numbers::pi * params.variances[c]) -
                        d * d / (2.0 * params.variances[c]);
            best = std::max(best, loglik[c]);
        }
        double z = 0.0;
        for (int c = 0; c < k; ++c) {
            loglik[c] = std::exp(loglik[c] - best);
            z += loglik[c];
        }
        for (int c = 0; c < k; ++c) {
            post[p * k + c] = loglik[c] / z;
        }
    }

    if (params.smoothing_radius > 0) {
        const int r = params.smoothing_radius;
        std::vector<double> smoothed(post.size(), 0.0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double cnt = 0.0;
                const std::size_t out = (static_cast<std::size_t>(y) * w + x) * k;
                for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
                    for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
                        const std::size_t in = (static_cast<std::size_t>(yy) * w + xx) * k;
                        for (int c = 0; c < k; ++c) {
                            smoothed[out + c] += post[in + c];
                        }
                        cnt += 1.0;
                    }
                }
                for (int c = 0; c < k; ++c) {
                    smoothed[out + c] /= cnt;
                }
            }
        }
        post.swap(smoothed);
    }

    const double q = params.quality;
    if (q > 0.0) {
        Rng rng(params.seed, stream_index, stream::classifier);
        std::vector<double> u(k);
        for (std::size_t p = 0; p < n; ++p) {
            double su = 0.0;
            for (int c = 0; c < k; ++c) {
                // normalized exponentials are uniform on the simplex
                u[c] = -std::log(1.0 - rng.uniform());
                su += u[c];
            }
            for (int c = 0; c < k; ++c) {
                const double noise = (1.0 - q) * (u[c] / su) + q / k;
                post[p * k + c] = (1.0 - q) * post[p * k + c] + q * noise;
            }
        }
    }
    return SoftMask(w, h, k, std::move(post));
}

} // namespace postdae::synth
