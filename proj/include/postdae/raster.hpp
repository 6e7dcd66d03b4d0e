#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace postdae {

/// Integer-labeled raster. Row-major, labels in [0, num_classes).
class LabelMask {
public:
    LabelMask() = default;
    /// All-background mask.
    LabelMask(int width, int height, int num_classes);
    /// Validates every label against num_classes.
    LabelMask(int width, int height, int num_classes, std::vector<std::uint8_t> labels);

    int width() const { return width_; }
    int height() const { return height_; }
    int num_classes() const { return num_classes_; }
    std::size_t size() const { return labels_.size(); }

    std::uint8_t at(int x, int y) const { return labels_[index(x, y)]; }
    /// Sets one pixel; throws ValidationError when label >= num_classes.
    void set(int x, int y, int label);
    std::span<const std::uint8_t> labels() const { return labels_; }

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    std::size_t index(int x, int y) const
    {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }
    /// Number of pixels with the given label.
    std::size_t count(int label) const;

    friend bool operator==(const LabelMask&, const LabelMask&) = default;

private:
    friend class MaskEditor;
    int width_ = 0;
    int height_ = 0;
    int num_classes_ = 2;
    std::vector<std::uint8_t> labels_;
};

/// Unchecked bulk writer for hot loops that already guarantee label validity.
class MaskEditor {
public:
    explicit MaskEditor(LabelMask& mask) : mask_(mask) {}
    std::span<std::uint8_t> labels() { return mask_.labels_; }

private:
    LabelMask& mask_;
};

/// Grayscale image with intensities in [0, 1].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0);
    GrayImage(int width, int height, std::vector<double> intensities);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::span<const double> intensities() const { return data_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

/// Per-pixel class probability vectors, stored pixel-major:
/// probs[(y * width + x) * num_classes + c].
class SoftMask {
public:
    SoftMask() = default;
    /// Validates that every pixel is a probability vector (sum within 1e-6).
    SoftMask(int width, int height, int num_classes, std::vector<double> probs);

    int width() const { return width_; }
    int height() const { return height_; }
    int num_classes() const { return num_classes_; }
    std::size_t pixels() const { return static_cast<std::size_t>(width_) * height_; }

    double prob(std::size_t pixel, int c) const { return probs_[pixel * num_classes_ + c]; }
    std::span<const double> pixel(std::size_t p) const
    {
        return std::span<const double>(probs_).subspan(p * num_classes_, num_classes_);
    }
    std::span<const double> probs() const { return probs_; }

private:
    int width_ = 0;
    int height_ = 0;
    int num_classes_ = 0;
    std::vector<double> probs_;
};

LabelMask load_mask(const std::filesystem::path& path);
void save_mask(const LabelMask& mask, const std::filesystem::path& path);
/// Exact bytes save_mask would write.
std::vector<std::uint8_t> encode_mask(const LabelMask& mask);
LabelMask decode_mask(std::span<const std::uint8_t> bytes);

/// 8-bit images map v/255; 16-bit (maxval > 255) are read big-endian.
GrayImage load_image(const std::filesystem::path& path);
/// Writes maxval 255, rounding to the nearest level.
void save_image(const GrayImage& image, const std::filesystem::path& path);

/// Writes one 16-bit PGM per class next to a JSON index at `index_path`.
void save_soft_mask(const SoftMask& soft, const std::filesystem::path& index_path);
/// Reads the JSON index and class planes; each pixel is renormalized to sum to 1.
SoftMask load_soft_mask(const std::filesystem::path& index_path);

SoftMask one_hot(const LabelMask& mask);
/// Ties resolve to the lowest class index.
LabelMask argmax_labels(const SoftMask& soft);
/// Foreground where prob(class 1) >= threshold. Requires exactly two classes.
LabelMask binarize(const SoftMask& soft, double threshold = 0.5);

} // namespace postdae
