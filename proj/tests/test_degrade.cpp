#include <doctest.h>

#include "test_helpers.hpp"

#include "postdae/error.hpp"
#include "postdae/metrics.hpp"
#include "postdae/synth.hpp"
#include "postdae/degrade.hpp"

#include <cmath>

using namespace postdae;
using namespace postdae::degrade;

namespace {

LabelMask square(int size, int x0, int y0, int side, int k = 2)
{
    LabelMask m(size, size, k);
    for (int y = y0; y < y0 + side; ++y) {
        for (int x = x0; x < x0 + side; ++x) {
            m.set(x, y, 1);
        }
    }
    return m;
}

LabelMask canonical_mask()
{
    synth::SceneConfig cfg;
    cfg.center_jitter = cfg.scale_jitter = cfg.rotation_jitter = 0.0;
    return synth::generate_scene(cfg, 0).mask;
}

} // namespace

TEST_CASE("removing from pure background changes nothing")
{
    const auto m = square(16, 0, 0, 4);
    const Shape e = EllipseShape{11.0, 11.0, 3.0, 2.0, 0.4};
    CHECK(apply_shape(m, e, 1, Polarity::remove) == m);
}

TEST_CASE("zero radius ellipse is empty")
{
    const LabelMask m(8, 8, 2);
    CHECK(apply_shape(m, EllipseShape{4.0, 4.0, 0.0, 0.0, 0.0}, 1, Polarity::add) == m);
}

TEST_CASE("axis aligned square polygon rasterizes to nine pixels")
{
    const LabelMask m(8, 8, 2);
    const Shape sq = PolygonShape{{{2.0, 3.0}, {5.0, 3.0}, {5.0, 6.0}, {2.0, 6.0}}};
    const auto out = apply_shape(m, sq, 1, Polarity::add);
    CHECK(out.count(1) == 9);
    CHECK(out.at(2, 3) == 1);
    CHECK(out.at(4, 5) == 1);
    CHECK(out.at(5, 5) == 0);
}

TEST_CASE("lines cover pixels within half thickness")
{
    const LabelMask m(10, 10, 2);
    const auto out = apply_shape(m, LineShape{0.0, 5.5, 10.0, 5.5, 1.0}, 1, Polarity::add);
    CHECK(out.count(1) == 10);
    for (int x = 0; x < 10; ++x) {
        CHECK(out.at(x, 5) == 1);
    }
    // centres exactly half a thickness away are inside
    CHECK(apply_shape(m, LineShape{0.0, 5.0, 10.0, 5.0, 1.0}, 1, Polarity::add).count(1) == 20);
}

TEST_CASE("add and remove touch only shape pixels")
{
    Rng rng(5);
    const auto cfg = preset(Severity::heavy);
    for (int trial = 0; trial < 30; ++trial) {
        const auto m = testing::random_mask(20, 20, 3, static_cast<std::uint64_t>(trial), 0.4);
        const auto kind = static_cast<ShapeKind>(trial % 3);
        const auto pol = trial % 2 ? Polarity::add : Polarity::remove;
        const int target = 1 + trial % 2;
        Rng shape_rng = rng.fork(static_cast<std::uint64_t>(trial));
        const auto shape = sample_shape(m, kind, target, pol, cfg, shape_rng);
        const auto out = apply_shape(m, shape, target, pol);
        for (int y = 0; y < 20; ++y) {
            for (int x = 0; x < 20; ++x) {
                const bool inside = shape_contains(shape, x + 0.5, y + 0.5);
                if (!inside) {
                    CHECK(out.at(x, y) == m.at(x, y));
                } else if (pol == Polarity::add) {
                    CHECK(out.at(x, y) == target);
                } else {
                    CHECK(out.at(x, y) == (m.at(x, y) == target ? 0 : m.at(x, y)));
                }
            }
        }
    }
}

TEST_CASE("morphology on small features")
{
    LabelMask dot(7, 7, 2);
    dot.set(3, 3, 1);
    const auto plus = morph(dot, MorphOp::dilate, 1, 1);
    CHECK(plus.count(1) == 5);
    CHECK(plus.at(3, 2) == 1);
    CHECK(plus.at(2, 2) == 0);
    CHECK(morph(dot, MorphOp::open, 1, 1).count(1) == 0);
    const LabelMask empty(7, 7, 2);
    CHECK(morph(empty, MorphOp::dilate, 1, 2) == empty);
    // away from the border, closing is extensive and opening anti-extensive
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto m = testing::random_mask(12, 12, 2, s, 0.6);
        const auto closed = morph(m, MorphOp::close, 1, 1);
        const auto opened = morph(m, MorphOp::open, 1, 1);
        for (int y = 2; y < 10; ++y) {
            for (int x = 2; x < 10; ++x) {
                if (m.at(x, y) == 1) {
                    CHECK(closed.at(x, y) == 1);
                } else {
                    CHECK(opened.at(x, y) == 0);
                }
            }
        }
    }
}

TEST_CASE("boundary flips")
{
    Rng rng(1);
    const auto m = testing::random_mask(16, 16, 3, 2);
    CHECK(boundary_flip(m, 2, 0.0, rng) == m);
    const LabelMask empty(9, 9, 2);
    CHECK(boundary_flip(empty, 1, 1.0, rng) == empty);

    // half plane: columns 0..3 background, 4..7 foreground
    LabelMask half(8, 4, 2);
    for (int y = 0; y < 4; ++y) {
        for (int x = 4; x < 8; ++x) {
            half.set(x, y, 1);
        }
    }
    const auto flipped = boundary_flip(half, 1, 1.0, rng);
    for (int y = 0; y < 4; ++y) {
        CHECK(flipped.at(3, y) == 1);
        CHECK(flipped.at(4, y) == 0);
        CHECK(flipped.at(2, y) == 0);
        CHECK(flipped.at(5, y) == 1);
    }
}

TEST_CASE("resize geometry")
{
    const auto m = testing::random_mask(16, 16, 3, 8);
    CHECK(random_resize(m, 1.0) == m);

    const auto sq = square(32, 12, 12, 8);
    const auto big = random_resize(sq, 2.0);
    CHECK(big.width() == 32);
    const double side = std::sqrt(static_cast<double>(big.count(1)));
    CHECK(std::abs(side - 16.0) <= 1.0);

    for (std::uint64_t s = 0; s < 10; ++s) {
        Rng rng(s, 5);
        const Shape e = EllipseShape{rng.uniform(28.0, 36.0), rng.uniform(28.0, 36.0), rng.uniform(10.0, 24.0),
                                     rng.uniform(10.0, 24.0), rng.uniform(0.0, 3.14)};
        const auto blob = apply_shape(LabelMask(64, 64, 2), e, 1, Polarity::add);
        const auto twice = random_resize(random_resize(blob, 0.5), 0.5);
        const auto once = random_resize(blob, 0.25);
        const double a = static_cast<double>(twice.count(1));
        const double b = static_cast<double>(once.count(1));
        CHECK(std::abs(a - b) <= 0.1 * std::max(a, b));
        for (auto l : twice.labels()) {
            CHECK(l < 2);
        }
    }
}

TEST_CASE("identity configuration is the identity")
{
    const auto cfg = identity_config(3);
    for (std::uint64_t i = 0; i < 10; ++i) {
        const auto m = testing::random_mask(20, 20, 3, i);
        CHECK(degrade::degrade(m, cfg, i) == m);
    }
}

TEST_CASE("degrade is deterministic and keeps labels valid")
{
    synth::SceneConfig sc;
    sc.num_classes = 3;
    const auto cfg = training_preset(11);
    for (std::uint64_t i = 0; i < 20; ++i) {
        const auto m = synth::generate_scene(sc, i).mask;
        const auto a = degrade::degrade(m, cfg, i);
        CHECK(a == degrade::degrade(m, cfg, i));
        for (auto l : a.labels()) {
            CHECK(l < 3);
        }
        const auto pair = degrade_pair(m, cfg, i);
        CHECK(pair.input == a);
    }
}

TEST_CASE("heavy preset on the canonical mask lands in the calibrated Dice band")
{
    const auto m = canonical_mask();
    const auto cfg = preset(Severity::heavy, 21);
    double total = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const double d = metrics::foreground_dice(m, degrade::degrade(m, cfg, i));
        CHECK(d >= 0.4);
        CHECK(d <= 0.9);
        total += d;
    }
    MESSAGE("mean heavy Dice " << total / 100.0);
}

TEST_CASE("severities are strictly ordered")
{
    synth::SceneConfig sc;
    double previous = 1.0;
    for (auto s : {Severity::light, Severity::moderate, Severity::heavy}) {
        const auto cfg = preset(s, 4);
        double total = 0.0;
        for (std::uint64_t i = 0; i < 100; ++i) {
            const auto m = synth::generate_scene(sc, i).mask;
            total += metrics::foreground_dice(m, degrade::degrade(m, cfg, i));
        }
        const double mean = total / 100.0;
        CHECK(mean < previous);
        previous = mean;
    }
}

TEST_CASE("configuration validation and json")
{
    auto cfg = preset(Severity::moderate);
    cfg.add_probability = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = preset(Severity::moderate);
    cfg.min_scale = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = preset(Severity::moderate);
    cfg.min_events = 5;
    cfg.max_events = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    const auto t = training_preset(9);
    const nlohmann::json j = t;
    const auto back = j.get<DegradationConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(severity_from_string("heavy") == Severity::heavy);
    CHECK_THROWS_AS(severity_from_string("extreme"), ConfigError);
}
