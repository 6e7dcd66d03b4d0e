#pragma once

#include "postdae/raster.hpp"
#include "postdae/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace postdae::degrade {

enum class ShapeKind { polygon, ellipse, line };
enum class Polarity { add, remove };
enum class MorphOp { erode, dilate, open, close };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);
std::string to_string(MorphOp op);

/// Free parameters of the corruption pipeline. Every sampled quantity is drawn
/// uniformly from its range.
struct DegradationConfig {
    int min_events = 0;
    int max_events = 0;
    std::vector<ShapeKind> kinds = {ShapeKind::polygon, ShapeKind::ellipse, ShapeKind::line};
    double add_probability = 0.5; ///< chance a shape event adds rather than removes
    double min_shape_size = 0.05; ///< shape radius as a fraction of the canvas side
    double max_shape_size = 0.15;
    double morph_probability = 0.0;
    int min_morph_radius = 1;
    int max_morph_radius = 2;
    int boundary_band = 1;
    double flip_probability = 0.0;
    double min_scale = 1.0;
    double max_scale = 1.0;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

void to_json(nlohmann::json& j, const DegradationConfig& cfg);
void from_json(const nlohmann::json& j, DegradationConfig& cfg);

/// Named presets. Test-time presets keep the resize range at [1, 1] so the
/// corrupted mask stays registered with its ground truth.
enum class Severity { light, moderate, heavy };
std::string to_string(Severity s);
Severity severity_from_string(const std::string& name);
DegradationConfig preset(Severity s, std::uint64_t seed = 0);
/// Mixed-severity corruption with resize augmentation, used to train the DAE.
DegradationConfig training_preset(std::uint64_t seed = 0);
/// All counts and probabilities zero, resize pinned to 1.
DegradationConfig identity_config(std::uint64_t seed = 0);

// --- geometric shapes -------------------------------------------------------

struct EllipseShape {
    double cx, cy, ax, ay, angle;
};
/// Simple polygon, vertices in pixel coordinates (pixel centers at i + 0.5).
struct PolygonShape {
    std::vector<std::pair<double, double>> vertices;
};
/// Thick segment: pixels whose center lies within thickness / 2 of it.
struct LineShape {
    double x0, y0, x1, y1, thickness;
};
using Shape = std::variant<EllipseShape, PolygonShape, LineShape>;

bool shape_contains(const Shape& shape, double x, double y);

/// add: pixels inside the shape take `target`; remove: pixels of `target`
/// inside the shape become background. Shapes are clipped to the canvas.
LabelMask apply_shape(const LabelMask& mask, const Shape& shape, int target, Polarity polarity);

/// Samples a shape of the given kind. Removal shapes are centred on a random
/// pixel of `target` when one exists; additions anywhere on the canvas.
Shape sample_shape(const LabelMask& mask, ShapeKind kind, int target, Polarity polarity,
                   const DegradationConfig& cfg, Rng& rng);

LabelMask add_or_remove_shape(const LabelMask& mask, ShapeKind kind, int target, Polarity polarity,
                              const DegradationConfig& cfg, Rng& rng);

// --- morphology, boundary noise, resize -------------------------------------

/// Binary morphology on the indicator of `label` with a discrete disk of the
/// given radius (radius 1 is the 4-neighbourhood plus centre). Pixels leaving
/// the class become background; pixels entering it take the class.
LabelMask morph(const LabelMask& mask, MorphOp op, int label, int radius);

/// Pixels within Chebyshev distance `band` of a pixel with a different label
/// toggle independently with probability p: foreground goes to background,
/// background takes the label of the nearest foreground pixel in the band.
LabelMask boundary_flip(const LabelMask& mask, int band, double p, Rng& rng);

/// Nearest-neighbour scaling about the canvas centre; uncovered pixels become
/// background. Output keeps the input dimensions.
LabelMask random_resize(const LabelMask& mask, double scale);

// --- composite --------------------------------------------------------------

/// Shape events, then morphology, then boundary flips, then resize; a pure
/// function of (mask, cfg, index).
LabelMask degrade(const LabelMask& mask, const DegradationConfig& cfg, std::uint64_t index);

struct DegradedPair {
    LabelMask input;  ///< corrupted and resized
    LabelMask target; ///< clean mask resized by the same factor
};

/// degrade() plus the clean target under the same resize, for training.
DegradedPair degrade_pair(const LabelMask& mask, const DegradationConfig& cfg, std::uint64_t index);

} // namespace postdae::degrade
