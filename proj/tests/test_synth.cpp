#include <doctest.h>

#include "test_helpers.hpp"

#include "postdae/error.hpp"
#include "postdae/metrics.hpp"
#include "postdae/synth.hpp"

#include <cmath>

using namespace postdae;
using namespace postdae::synth;

namespace {

SceneConfig still_config(int classes)
{
    SceneConfig cfg;
    cfg.num_classes = classes;
    cfg.center_jitter = 0.0;
    cfg.scale_jitter = 0.0;
    cfg.rotation_jitter = 0.0;
    cfg.noise_sigma = 0.0;
    cfg.bias_amplitude = 0.0;
    return cfg;
}

} // namespace

TEST_CASE("zero randomness gives the canonical scene for every index")
{
    const auto cfg = still_config(2);
    const auto first = generate_scene(cfg, 0);
    for (std::uint64_t i = 1; i < 5; ++i) {
        const auto s = generate_scene(cfg, i);
        CHECK(s.mask == first.mask);
        CHECK(s.image == first.image);
    }
}

TEST_CASE("scenes are pure functions of config and index")
{
    SceneConfig cfg;
    cfg.num_classes = 3;
    const auto a = generate_scene(cfg, 42);
    const auto b = generate_scene(cfg, 42);
    CHECK(a.mask == b.mask);
    CHECK(a.image == b.image);
    CHECK_FALSE(generate_scene(cfg, 43).mask == a.mask);
}

TEST_CASE("anatomy has fixed topology")
{
    for (int classes : {2, 3}) {
        SceneConfig cfg;
        cfg.num_classes = classes;
        for (std::uint64_t i = 0; i < 40; ++i) {
            const auto m = generate_scene(cfg, i).mask;
            CHECK(testing::components(m, 1) == 2);
            if (classes == 3) {
                CHECK(testing::components(m, 2) == 1);
            }
        }
    }
}

TEST_CASE("scene config validation")
{
    SceneConfig cfg;
    cfg.class_means = {0.5, 0.52, 0.3};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SceneConfig{};
    cfg.num_classes = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SceneConfig{};
    cfg.center_jitter = 0.4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("fitting on constant class intensity floors the variance")
{
    LabelMask mask(4, 1, 2, {0, 0, 1, 1});
    GrayImage img(4, 1, {0.2, 0.2, 0.7, 0.9});
    const auto p = fit_weak_classifier(std::span(&img, 1), std::span(&mask, 1));
    CHECK(p.means[0] == doctest::Approx(0.2));
    CHECK(p.variances[0] == kVarianceFloor);
    CHECK(p.means[1] == doctest::Approx(0.8));
    CHECK(p.variances[1] == doctest::Approx(0.01));
    CHECK_THROWS_AS(fit_weak_classifier({}, {}), FittingError);
    LabelMask empty_class(4, 1, 2);
    CHECK_THROWS_AS(fit_weak_classifier(std::span(&img, 1), std::span(&empty_class, 1)), FittingError);
}

TEST_CASE("separable intensities are classified perfectly at quality zero")
{
    const auto scene = generate_scene(still_config(2), 0);
    auto params = fit_weak_classifier(std::span(&scene.image, 1), std::span(&scene.mask, 1));
    const auto seg = argmax_labels(weak_segment(scene.image, params));
    CHECK(metrics::foreground_dice(seg, scene.mask) == 1.0);
}

TEST_CASE("quality one gives uniform output")
{
    SceneConfig cfg;
    cfg.num_classes = 3;
    const auto scene = generate_scene(cfg, 1);
    auto params = fit_weak_classifier(std::span(&scene.image, 1), std::span(&scene.mask, 1));
    params.quality = 1.0;
    params.smoothing_radius = 2;
    const auto soft = weak_segment(scene.image, params, 5);
    for (double v : soft.probs()) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("pixel at a class mean prefers that class")
{
    WeakClassifierParams p;
    p.means = {0.2, 0.6};
    p.variances = {0.01, 0.01};
    const auto soft = weak_segment(GrayImage(1, 1, {0.6}), p);
    CHECK(soft.prob(0, 1) > soft.prob(0, 0));
}

TEST_CASE("posteriors are normalized for random inputs")
{
    Rng rng(3);
    std::vector<double> px(100);
    for (auto& v : px) {
        v = rng.uniform();
    }
    WeakClassifierParams p;
    p.means = {0.1, 0.5, 0.8};
    p.variances = {0.02, 0.01, 0.05};
    p.smoothing_radius = 1;
    p.quality = 0.3;
    const auto soft = weak_segment(GrayImage(10, 10, px), p, 2);
    for (std::size_t i = 0; i < soft.pixels(); ++i) {
        double s = 0.0;
        for (double v : soft.pixel(i)) {
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("classifier accuracy does not improve as quality knob grows")
{
    SceneConfig cfg;
    std::vector<Scene> scenes;
    for (std::uint64_t i = 0; i < 20; ++i) {
        scenes.push_back(generate_scene(cfg, 500 + i));
    }
    std::vector<GrayImage> imgs;
    std::vector<LabelMask> masks;
    for (std::uint64_t i = 0; i < 5; ++i) {
        const auto s = generate_scene(cfg, i);
        imgs.push_back(s.image);
        masks.push_back(s.mask);
    }
    auto params = fit_weak_classifier(imgs, masks);
    double previous = 2.0;
    for (double q : {0.0, 0.25, 0.5, 0.75}) {
        params.quality = q;
        double total = 0.0;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            total += metrics::foreground_dice(argmax_labels(weak_segment(scenes[i].image, params, i)), scenes[i].mask);
        }
        const double mean = total / static_cast<double>(scenes.size());
        CHECK(mean <= previous);
        previous = mean;
    }
}
