#include "postdae/degrade.hpp"

#include "postdae/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace postdae::degrade {

namespace {

bool point_in_polygon(const std::vector<std::pair<double, double>>& v, double x, double y)
{
    bool inside = false;
    const std::size_t n = v.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto [xi, yi] = v[i];
        const auto [xj, yj] = v[j];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
    }
    return inside;
}

double segment_distance(const LineShape& l, double x, double y)
{
    const double dx = l.x1 - l.x0;
    const double dy = l.y1 - l.y0;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = std::clamp(((x - l.x0) * dx + (y - l.y0) * dy) / len2, 0.0, 1.0);
    }
    return std::hypot(x - (l.x0 + t * dx), y - (l.y0 + t * dy));
}

std::vector<std::pair<int, int>> disk_offsets(int radius)
{
    std::vector<std::pair<int, int>> out;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) {
                out.emplace_back(dx, dy);
            }
        }
    }
    return out;
}

using Indicator = std::vector<std::uint8_t>;

Indicator erode(const Indicator& in, int w, int h, const std::vector<std::pair<int, int>>& disk)
{
    Indicator out(in.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool keep = in[static_cast<std::size_t>(y) * w + x] != 0;
            for (std::size_t k = 0; keep && k < disk.size(); ++k) {
                const int xx = x + disk[k].first;
                const int yy = y + disk[k].second;
                keep = xx >= 0 && yy >= 0 && xx < w && yy < h && in[static_cast<std::size_t>(yy) * w + xx];
            }
            out[static_cast<std::size_t>(y) * w + x] = keep;
        }
    }
    return out;
}

Indicator dilate(const Indicator& in, int w, int h, const std::vector<std::pair<int, int>>& disk)
{
    Indicator out(in.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool hit = false;
            for (std::size_t k = 0; !hit && k < disk.size(); ++k) {
                const int xx = x + disk[k].first;
                const int yy = y + disk[k].second;
                hit = xx >= 0 && yy >= 0 && xx < w && yy < h && in[static_cast<std::size_t>(yy) * w + xx];
            }
            out[static_cast<std::size_t>(y) * w + x] = hit;
        }
    }
    return out;
}

// Corrupts without resizing and reports the sampled resize factor.
LabelMask corrupt(const LabelMask& mask, const DegradationConfig& cfg, std::uint64_t index, double& scale)
{
    cfg.validate();
    Rng rng(cfg.seed, index, stream::degrade);
    LabelMask out = mask;
    const int fg_max = mask.num_classes() - 1;

    const auto events = rng.uniform_int(cfg.min_events, cfg.max_events);
    for (std::int64_t e = 0; e < events; ++e) {
        const auto kind = cfg.kinds[static_cast<std::size_t>(rng.uniform_int(0, std::ssize(cfg.kinds) - 1))];
        const auto polarity = rng.bernoulli(cfg.add_probability) ? Polarity::add : Polarity::remove;
        const int target = static_cast<int>(rng.uniform_int(1, fg_max));
        out = add_or_remove_shape(out, kind, target, polarity, cfg, rng);
    }

    if (rng.bernoulli(cfg.morph_probability)) {
        const auto op = static_cast<MorphOp>(rng.uniform_int(0, 3));
        const int label = static_cast<int>(rng.uniform_int(1, fg_max));
        const int radius = static_cast<int>(rng.uniform_int(cfg.min_morph_radius, cfg.max_morph_radius));
        out = morph(out, op, label, radius);
    }

    if (cfg.flip_probability > 0.0) {
        out = boundary_flip(out, cfg.boundary_band, cfg.flip_probability, rng);
    }

    scale = cfg.min_scale == cfg.max_scale ? cfg.min_scale : rng.uniform(cfg.min_scale, cfg.max_scale);
    return out;
}

} // namespace

std::string to_string(ShapeKind kind)
{
    switch (kind) {
    case ShapeKind::polygon: return "polygon";
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::line: return "line";
    }
    return "?";
}

ShapeKind shape_kind_from_string(const std::string& name)
{
    if (name == "polygon") return ShapeKind::polygon;
    if (name == "ellipse") return ShapeKind::ellipse;
    if (name == "line") return ShapeKind::line;
    throw ConfigError("unknown shape kind '" + name + "'");
}

std::string to_string(MorphOp op)
{
    switch (op) {
    case MorphOp::erode: return "erode";
    case MorphOp::dilate: return "dilate";
    case MorphOp::open: return "open";
    case MorphOp::close: return "close";
    }
    return "?";
}

void DegradationConfig::validate() const
{
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ConfigError(std::string(name) + " must lie in [0, 1]");
        }
    };
    prob(add_probability, "add_probability");
    prob(morph_probability, "morph_probability");
    prob(flip_probability, "flip_probability");
    if (min_events < 0 || min_events > max_events) {
        throw ConfigError("event count range must satisfy 0 <= min <= max");
    }
    if (max_events > 0 && kinds.empty()) {
        throw ConfigError("shape events need at least one shape kind");
    }
    if (min_shape_size < 0.0 || min_shape_size > max_shape_size) {
        throw ConfigError("shape size range must satisfy 0 <= min <= max");
    }
    if (min_morph_radius < 1 || min_morph_radius > max_morph_radius) {
        throw ConfigError("morphology radius range must satisfy 1 <= min <= max");
    }
    if (boundary_band < 1) {
        throw ConfigError("boundary band must be at least 1 pixel");
    }
    if (!(min_scale > 0.0) || min_scale > max_scale) {
        throw ConfigError("resize range must satisfy 0 < lo <= hi");
    }
}

void to_json(nlohmann::json& j, const DegradationConfig& cfg)
{
    std::vector<std::string> kinds;
    for (auto k : cfg.kinds) {
        kinds.push_back(to_string(k));
    }
    j = nlohmann::json{{"event_count", {cfg.min_events, cfg.max_events}},
                       {"shape_kinds", kinds},
                       {"add_probability", cfg.add_probability},
                       {"shape_size", {cfg.min_shape_size, cfg.max_shape_size}},
                       {"morph_probability", cfg.morph_probability},
                       {"morph_radius", {cfg.min_morph_radius, cfg.max_morph_radius}},
                       {"boundary_band", cfg.boundary_band},
                       {"flip_probability", cfg.flip_probability},
                       {"resize_scale", {cfg.min_scale, cfg.max_scale}},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, DegradationConfig& cfg)
{
    const DegradationConfig d;
    auto pair_or = [&](const char* key, auto lo, auto hi) {
        using T = decltype(lo);
        if (!j.contains(key)) {
            return std::pair<T, T>{lo, hi};
        }
        const auto& a = j.at(key);
        if (!a.is_array() || a.size() != 2) {
            throw ConfigError(std::string(key) + " must be a [min, max] pair");
        }
        return std::pair<T, T>{a[0].get<T>(), a[1].get<T>()};
    };
    std::tie(cfg.min_events, cfg.max_events) = pair_or("event_count", d.min_events, d.max_events);
    if (j.contains("shape_kinds")) {
        cfg.kinds.clear();
        for (const auto& k : j.at("shape_kinds")) {
            cfg.kinds.push_back(shape_kind_from_string(k.get<std::string>()));
        }
    } else {
        cfg.kinds = d.kinds;
    }
    cfg.add_probability = j.value("add_probability", d.add_probability);
    std::tie(cfg.min_shape_size, cfg.max_shape_size) = pair_or("shape_size", d.min_shape_size, d.max_shape_size);
    cfg.morph_probability = j.value("morph_probability", d.morph_probability);
    std::tie(cfg.min_morph_radius, cfg.max_morph_radius) =
        pair_or("morph_radius", d.min_morph_radius, d.max_morph_radius);
    cfg.boundary_band = j.value("boundary_band", d.boundary_band);
    cfg.flip_probability = j.value("flip_probability", d.flip_probability);
    std::tie(cfg.min_scale, cfg.max_scale) = pair_or("resize_scale", d.min_scale, d.max_scale);
    cfg.seed = j.value("seed", d.seed);
}

std::string to_string(Severity s)
{
    switch (s) {
    case Severity::light: return "light";
    case Severity::moderate: return "moderate";
    case Severity::heavy: return "heavy";
    }
    return "?";
}

Severity severity_from_string(const std::string& name)
{
    if (name == "light") return Severity::light;
    if (name == "moderate") return Severity::moderate;
    if (name == "heavy") return Severity::heavy;
    throw ConfigError("unknown severity '" + name + "' (expected light, moderate or heavy)");
}

DegradationConfig preset(Severity s, std::uint64_t seed)
{
    DegradationConfig cfg;
    cfg.seed = seed;
    switch (s) {
    case Severity::light:
        cfg.min_events = 1;
        cfg.max_events = 2;
        cfg.min_shape_size = 0.04;
        cfg.max_shape_size = 0.08;
        cfg.morph_probability = 0.3;
        cfg.min_morph_radius = 1;
        cfg.max_morph_radius = 1;
        cfg.boundary_band = 1;
        cfg.flip_probability = 0.15;
        break;
    case Severity::moderate:
        cfg.min_events = 2;
        cfg.max_events = 4;
        cfg.min_shape_size = 0.06;
        cfg.max_shape_size = 0.12;
        cfg.morph_probability = 0.5;
        cfg.min_morph_radius = 1;
        cfg.max_morph_radius = 2;
        cfg.boundary_band = 1;
        cfg.flip_probability = 0.25;
        break;
    case Severity::heavy:
        cfg.min_events = 3;
        cfg.max_events = 5;
        cfg.min_shape_size = 0.08;
        cfg.max_shape_size = 0.18;
        cfg.morph_probability = 0.7;
        cfg.min_morph_radius = 1;
        cfg.max_morph_radius = 3;
        cfg.boundary_band = 2;
        cfg.flip_probability = 0.3;
        break;
    }
    return cfg;
}

DegradationConfig training_preset(std::uint64_t seed)
{
    DegradationConfig cfg;
    cfg.seed = seed;
    cfg.min_events = 0;
    cfg.max_events = 6;
    cfg.min_shape_size = 0.04;
    cfg.max_shape_size = 0.18;
    cfg.morph_probability = 0.3;
    cfg.min_morph_radius = 1;
    cfg.max_morph_radius = 2;
    cfg.boundary_band = 1;
    cfg.flip_probability = 0.15;
    cfg.min_scale = 0.9;
    cfg.max_scale = 1.1;
    return cfg;
}

DegradationConfig identity_config(std::uint64_t seed)
{
    DegradationConfig cfg;
    cfg.seed = seed;
    cfg.min_events = 0;
    cfg.max_events = 0;
    cfg.add_probability = 0.0;
    cfg.morph_probability = 0.0;
    cfg.flip_probability = 0.0;
    cfg.min_scale = 1.0;
    cfg.max_scale = 1.0;
    return cfg;
}

// --- shapes -----------------------------------------------------------------

bool shape_contains(const Shape& shape, double x, double y)
{
    return std::visit(
        [&](const auto& s) -> bool {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, EllipseShape>) {
                if (s.ax <= 0.0 || s.ay <= 0.0) {
                    return false;
                }
                const double dx = x - s.cx;
                const double dy = y - s.cy;
                const double c = std::cos(s.angle);
                const double sn = std::sin(s.angle);
                const double u = (dx * c + dy * sn) / s.ax;
                const double v = (-dx * sn + dy * c) / s.ay;
                return u * u + v * v <= 1.0;
            } else if constexpr (std::is_same_v<T, PolygonShape>) {
                return s.vertices.size() >= 3 && point_in_polygon(s.vertices, x, y);
            } else {
                return s.thickness > 0.0 && segment_distance(s, x, y) <= s.thickness / 2.0;
            }
        },
        shape);
}

LabelMask apply_shape(const LabelMask& mask, const Shape& shape, int target, Polarity polarity)
{
    if (target < 0 || target >= mask.num_classes()) {
        throw ContractError("shape target class " + std::to_string(target) + " out of range");
    }
    LabelMask out = mask;
    auto labels = MaskEditor(out).labels();
    const auto t = static_cast<std::uint8_t>(target);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!shape_contains(shape, x + 0.5, y + 0.5)) {
                continue;
            }
            auto& l = labels[mask.index(x, y)];
            if (polarity == Polarity::add) {
                l = t;
            } else if (l == t) {
                l = 0;
            }
        }
    }
    return out;
}

Shape sample_shape(const LabelMask& mask, ShapeKind kind, int target, Polarity polarity,
                   const DegradationConfig& cfg, Rng& rng)
{
    const double side = std::min(mask.width(), mask.height());
    const double r = rng.uniform(cfg.min_shape_size, cfg.max_shape_size) * side;

    double cx = rng.uniform(0.0, mask.width());
    double cy = rng.uniform(0.0, mask.height());
    if (polarity == Polarity::remove) {
        const auto count = mask.count(target);
        if (count > 0) {
            auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(count) - 1));
            const auto labels = mask.labels();
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] == target && pick-- == 0) {
                    cx = static_cast<double>(i % mask.width()) + 0.5;
                    cy = static_cast<double>(i / mask.width()) + 0.5;
                    break;
                }
            }
        }
    }

    switch (kind) {
    case ShapeKind::ellipse:
        return EllipseShape{cx, cy, r, r * rng.uniform(0.4, 1.0), rng.uniform(0.0, std::numbers::pi)};
    case ShapeKind::polygon: {
        const auto n = rng.uniform_int(3, 7);
        std::vector<double> angles(static_cast<std::size_t>(n));
        for (auto& a : angles) {
            a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        std::sort(angles.begin(), angles.end());
        PolygonShape poly;
        for (double a : angles) {
            const double rr = r * rng.uniform(0.5, 1.0);
            poly.vertices.emplace_back(cx + rr * std::cos(a), cy + rr * std::sin(a));
        }
        return poly;
    }
    case ShapeKind::line: {
        const double half = r * rng.uniform(1.0, 2.0);
        const double a = rng.uniform(0.0, std::numbers::pi);
        const double thickness = rng.uniform(1.0, std::max(1.5, r / 3.0));
        return LineShape{cx - half * std::cos(a), cy - half * std::sin(a), cx + half * std::cos(a),
                         cy + half * std::sin(a), thickness};
    }
    }
    throw ContractError("unknown shape kind");
}

LabelMask add_or_remove_shape(const LabelMask& mask, ShapeKind kind, int target, Polarity polarity,
                              const DegradationConfig& cfg, Rng& rng)
{
    if (target < 0 || target >= mask.num_classes()) {
        throw ContractError("shape target class " + std::to_string(target) + " out of range");
    }
    return apply_shape(mask, sample_shape(mask, kind, target, polarity, cfg, rng), target, polarity);
}

// --- morphology -------------------------------------------------------------

LabelMask morph(const LabelMask& mask, MorphOp op, int label, int radius)
{
    if (radius < 1) {
        throw ContractError("morphology radius must be at least 1");
    }
    if (label < 0 || label >= mask.num_classes()) {
        throw ContractError("morphology class out of range");
    }
    const int w = mask.width();
    const int h = mask.height();
    const auto disk = disk_offsets(radius);
    Indicator ind(mask.size());
    const auto labels = mask.labels();
    for (std::size_t i = 0; i < ind.size(); ++i) {
        ind[i] = labels[i] == label;
    }
    Indicator result;
    switch (op) {
    case MorphOp::erode: result = erode(ind, w, h, disk); break;
    case MorphOp::dilate: result = dilate(ind, w, h, disk); break;
    case MorphOp::open: result = dilate(erode(ind, w, h, disk), w, h, disk); break;
    case MorphOp::close: result = erode(dilate(ind, w, h, disk), w, h, disk); break;
    }
    LabelMask out = mask;
    auto dst = MaskEditor(out).labels();
    for (std::size_t i = 0; i < ind.size(); ++i) {
        if (ind[i] && !result[i]) {
            dst[i] = 0;
        } else if (!ind[i] && result[i]) {
            dst[i] = static_cast<std::uint8_t>(label);
        }
    }
    return out;
}

LabelMask boundary_flip(const LabelMask& mask, int band, double p, Rng& rng)
{
    if (band < 1) {
        throw ContractError("boundary band must be at least 1");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ContractError("flip probability must lie in [0, 1]");
    }
    const int w = mask.width();
    const int h = mask.height();
    LabelMask out = mask;
    auto dst = MaskEditor(out).labels();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto own = mask.at(x, y);
            bool near_boundary = false;
            int nearest_fg = -1;
            int nearest_d2 = std::numeric_limits<int>::max();
            for (int yy = std::max(0, y - band); yy <= std::min(h - 1, y + band); ++yy) {
                for (int xx = std::max(0, x - band); xx <= std::min(w - 1, x + band); ++xx) {
                    const auto other = mask.at(xx, yy);
                    if (other == own) {
                        continue;
                    }
                    near_boundary = true;
                    const int d2 = (xx - x) * (xx - x) + (yy - y) * (yy - y);
                    if (other != 0 && d2 < nearest_d2) {
                        nearest_d2 = d2;
                        nearest_fg = other;
                    }
                }
            }
            if (!near_boundary || !rng.bernoulli(p)) {
                continue;
            }
            if (own != 0) {
                dst[mask.index(x, y)] = 0;
            } else if (nearest_fg > 0) {
                dst[mask.index(x, y)] = static_cast<std::uint8_t>(nearest_fg);
            }
        }
    }
    return out;
}

LabelMask random_resize(const LabelMask& mask, double scale)
{
    if (!(scale > 0.0)) {
        throw ContractError("resize scale must be positive");
    }
    if (scale == 1.0) {
        return mask;
    }
    const int w = mask.width();
    const int h = mask.height();
    LabelMask out(w, h, mask.num_classes());
    auto dst = MaskEditor(out).labels();
    const double cx = w / 2.0;
    const double cy = h / 2.0;
    for (int y = 0; y < h; ++y) {
        const double sy = std::floor((y + 0.5 - cy) / scale + cy);
        for (int x = 0; x < w; ++x) {
            const double sx = std::floor((x + 0.5 - cx) / scale + cx);
            if (sx >= 0 && sy >= 0 && sx < w && sy < h) {
                dst[out.index(x, y)] = mask.at(static_cast<int>(sx), static_cast<int>(sy));
            }
        }
    }
    return out;
}

LabelMask degrade(const LabelMask& mask, const DegradationConfig& cfg, std::uint64_t index)
{
    double scale = 1.0;
    auto out = corrupt(mask, cfg, index, scale);
    return random_resize(out, scale);
}

DegradedPair degrade_pair(const LabelMask& mask, const DegradationConfig& cfg, std::uint64_t index)
{
    double scale = 1.0;
    auto corrupted = corrupt(mask, cfg, index, scale);
    return {random_resize(corrupted, scale), random_resize(mask, scale)};
}

} // namespace postdae::degrade
