#include "postdae/raster.hpp"

#include "postdae/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace postdae {

namespace {

constexpr double kSumTolerance = 1e-6;

void check_dims(int width, int height)
{
    if (width <= 0 || height <= 0) {
        throw ValidationError("raster dimensions must be positive, got " + std::to_string(width) + "x" +
                              std::to_string(height));
    }
}

std::size_t pixel_count(int width, int height)
{
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

// --- PGM plumbing -----------------------------------------------------------

struct Pgm {
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::vector<std::string> comments;
    std::vector<std::uint16_t> samples;
};

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    // Skips whitespace and comments, collecting comment text.
    void skip_space(std::vector<std::string>& comments)
    {
        while (pos_ < bytes_.size()) {
            const auto c = bytes_[pos_];
            if (c == '#') {
                std::string text;
                ++pos_;
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') {
                    text.push_back(static_cast<char>(bytes_[pos_++]));
                }
                comments.push_back(text);
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    int read_int(std::vector<std::string>& comments)
    {
        skip_space(comments);
        long value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000'000L) {
                throw FormatError("PGM header value out of range");
            }
            ++pos_;
            ++digits;
        }
        if (digits == 0) {
            throw FormatError("PGM header: expected an integer");
        }
        return static_cast<int>(value);
    }

    std::size_t pos() const { return pos_; }
    void advance() { ++pos_; }
    bool at_end() const { return pos_ >= bytes_.size(); }
    std::uint8_t peek() const { return bytes_[pos_]; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

Pgm parse_pgm(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw FormatError("not a binary PGM (missing P5 magic)");
    }
    Pgm pgm;
    HeaderReader reader(bytes.subspan(2));
    pgm.width = reader.read_int(pgm.comments);
    pgm.height = reader.read_int(pgm.comments);
    pgm.maxval = reader.read_int(pgm.comments);
    if (pgm.width <= 0 || pgm.height <= 0) {
        throw FormatError("PGM dimensions must be positive");
    }
    if (pgm.maxval <= 0 || pgm.maxval > 65535) {
        throw FormatError("PGM maxval must be in [1, 65535]");
    }
    // exactly one whitespace byte separates the header from the raster
    if (reader.at_end() || !std::isspace(reader.peek())) {
        throw FormatError("PGM header: missing separator before raster");
    }
    reader.advance();
    const std::size_t offset = 2 + reader.pos();
    const std::size_t n = pixel_count(pgm.width, pgm.height);
    const std::size_t bytes_per = pgm.maxval > 255 ? 2 : 1;
    if (bytes.size() - offset != n * bytes_per) {
        throw FormatError("PGM raster size does not match header (expected " + std::to_string(n * bytes_per) +
                          " bytes, found " + std::to_string(bytes.size() - offset) + ")");
    }
    pgm.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (bytes_per == 1) {
            pgm.samples[i] = bytes[offset + i];
        } else {
            pgm.samples[i] = static_cast<std::uint16_t>((bytes[offset + 2 * i] << 8) | bytes[offset + 2 * i + 1]);
        }
        if (pgm.samples[i] > pgm.maxval) {
            throw FormatError("PGM sample exceeds maxval");
        }
    }
    return pgm;
}

std::vector<std::uint8_t> encode_pgm(int width, int height, int maxval, const std::string& comment,
                                     std::span<const std::uint16_t> samples)
{
    std::string header = "P5\n";
    if (!comment.empty()) {
        header += "# " + comment + "\n";
    }
    header += std::to_string(width) + " " + std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + samples.size() * (maxval > 255 ? 2 : 1));
    for (auto s : samples) {
        if (maxval > 255) {
            out.push_back(static_cast<std::uint8_t>(s >> 8));
        }
        out.push_back(static_cast<std::uint8_t>(s & 0xff));
    }
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

void check_probability_vectors(std::span<const double> probs, int num_classes)
{
    const std::size_t k = static_cast<std::size_t>(num_classes);
    for (std::size_t p = 0; p < probs.size() / k; ++p) {
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double v = probs[p * k + c];
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ValidationError("soft mask entry outside [0, 1] at pixel " + std::to_string(p));
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kSumTolerance) {
            throw ValidationError("soft mask pixel " + std::to_string(p) + " sums to " + std::to_string(sum));
        }
    }
}

} // namespace

// --- LabelMask --------------------------------------------------------------

LabelMask::LabelMask(int width, int height, int num_classes)
    : width_(width), height_(height), num_classes_(num_classes)
{
    check_dims(width, height);
    if (num_classes < 2 || num_classes > 256) {
        throw ValidationError("num_classes must be in [2, 256], got " + std::to_string(num_classes));
    }
    labels_.assign(pixel_count(width, height), 0);
}

LabelMask::LabelMask(int width, int height, int num_classes, std::vector<std::uint8_t> labels)
    : LabelMask(width, height, num_classes)
{
    if (labels.size() != labels_.size()) {
        throw ValidationError("label array has " + std::to_string(labels.size()) + " entries, expected " +
                              std::to_string(labels_.size()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) {
            throw ValidationError("label " + std::to_string(labels[i]) + " at pixel " + std::to_string(i) +
                                  " exceeds declared classes=" + std::to_string(num_classes));
        }
    }
    labels_ = std::move(labels);
}

void LabelMask::set(int x, int y, int label)
{
    if (label < 0 || label >= num_classes_) {
        throw ValidationError("label " + std::to_string(label) + " out of range");
    }
    labels_[index(x, y)] = static_cast<std::uint8_t>(label);
}

std::size_t LabelMask::count(int label) const
{
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), static_cast<std::uint8_t>(label)));
}

// --- GrayImage --------------------------------------------------------------

GrayImage::GrayImage(int width, int height, double fill)
    : GrayImage(width, height, std::vector<double>(pixel_count(width, height), fill))
{
}

GrayImage::GrayImage(int width, int height, std::vector<double> intensities)
    : width_(width), height_(height), data_(std::move(intensities))
{
    check_dims(width, height);
    if (data_.size() != pixel_count(width, height)) {
        throw ValidationError("intensity array size does not match dimensions");
    }
    for (double v : data_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("image intensity outside [0, 1]");
        }
    }
}

// --- SoftMask ---------------------------------------------------------------

SoftMask::SoftMask(int width, int height, int num_classes, std::vector<double> probs)
    : width_(width), height_(height), num_classes_(num_classes), probs_(std::move(probs))
{
    check_dims(width, height);
    if (num_classes < 2) {
        throw ValidationError("soft mask needs at least two classes");
    }
    if (probs_.size() != pixel_count(width, height) * static_cast<std::size_t>(num_classes)) {
        throw ValidationError("probability array size does not match dimensions");
    }
    check_probability_vectors(probs_, num_classes);
}

// --- mask I/O ---------------------------------------------------------------

std::vector<std::uint8_t> encode_mask(const LabelMask& mask)
{
    std::vector<std::uint16_t> samples(mask.labels().begin(), mask.labels().end());
    return encode_pgm(mask.width(), mask.height(), mask.num_classes() - 1,
                      "classes=" + std::to_string(mask.num_classes()), samples);
}

LabelMask decode_mask(std::span<const std::uint8_t> bytes)
{
    // Labels beyond the declared classes are a validation problem, not a format
    // one, so parse the raster before checking them against the comment.
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw FormatError("not a binary PGM (missing P5 magic)");
    }
    Pgm pgm;
    {
        HeaderReader reader(bytes.subspan(2));
        pgm.width = reader.read_int(pgm.comments);
        pgm.height = reader.read_int(pgm.comments);
        pgm.maxval = reader.read_int(pgm.comments);
        if (pgm.width <= 0 || pgm.height <= 0 || pgm.maxval <= 0 || pgm.maxval > 255) {
            throw FormatError("mask PGM must be 8-bit with positive dimensions");
        }
        if (reader.at_end() || !std::isspace(reader.peek())) {
            throw FormatError("PGM header: missing separator before raster");
        }
        reader.advance();
        const std::size_t offset = 2 + reader.pos();
        const std::size_t n = pixel_count(pgm.width, pgm.height);
        if (bytes.size() - offset != n) {
            throw FormatError("PGM raster size does not match header");
        }
        pgm.samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    }

    int classes = -1;
    for (const auto& comment : pgm.comments) {
        auto text = comment;
        text.erase(0, text.find_first_not_of(' '));
        if (text.rfind("classes=", 0) == 0) {
            try {
                classes = std::stoi(text.substr(8));
            } catch (const std::exception&) {
                throw FormatError("malformed classes comment: '" + comment + "'");
            }
        }
    }
    if (classes < 0) {
        throw FormatError("mask PGM lacks a '# classes=<n>' comment");
    }
    if (classes < 2 || classes > 256) {
        throw FormatError("classes comment out of range");
    }
    if (pgm.maxval != classes - 1) {
        throw FormatError("PGM maxval " + std::to_string(pgm.maxval) + " does not equal classes-1");
    }
    std::vector<std::uint8_t> labels(pgm.samples.begin(), pgm.samples.end());
    return LabelMask(pgm.width, pgm.height, classes, std::move(labels));
}

LabelMask load_mask(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    return decode_mask(bytes);
}

void save_mask(const LabelMask& mask, const std::filesystem::path& path)
{
    write_file(path, encode_mask(mask));
}

// --- image I/O --------------------------------------------------------------

GrayImage load_image(const std::filesystem::path& path)
{
    const auto pgm = parse_pgm(read_file(path));
    std::vector<double> data(pgm.samples.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<double>(pgm.samples[i]) / pgm.maxval;
    }
    return GrayImage(pgm.width, pgm.height, std::move(data));
}

void save_image(const GrayImage& image, const std::filesystem::path& path)
{
    std::vector<std::uint16_t> samples(image.size());
    const auto data = image.intensities();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<std::uint16_t>(std::lround(data[i] * 255.0));
    }
    write_file(path, encode_pgm(image.width(), image.height(), 255, "", samples));
}

// --- soft mask I/O ----------------------------------------------------------

void save_soft_mask(const SoftMask& soft, const std::filesystem::path& index_path)
{
    constexpr int kMaxval = 65535;
    const auto stem = index_path.stem().string();
    const auto dir = index_path.parent_path();
    nlohmann::json index;
    index["width"] = soft.width();
    index["height"] = soft.height();
    index["num_classes"] = soft.num_classes();
    index["maxval"] = kMaxval;
    index["files"] = nlohmann::json::array();
    std::vector<std::uint16_t> plane(soft.pixels());
    for (int c = 0; c < soft.num_classes(); ++c) {
        for (std::size_t p = 0; p < plane.size(); ++p) {
            plane[p] = static_cast<std::uint16_t>(std::lround(soft.prob(p, c) * kMaxval));
        }
        const auto name = stem + "_c" + std::to_string(c) + ".pgm";
        write_file(dir / name, encode_pgm(soft.width(), soft.height(), kMaxval, "", plane));
        index["files"].push_back(name);
    }
    const auto text = index.dump(2) + "\n";
    write_file(index_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

SoftMask load_soft_mask(const std::filesystem::path& index_path)
{
    const auto raw = read_file(index_path);
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(raw.begin(), raw.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("soft mask index " + index_path.string() + ": " + e.what());
    }
    int width = 0;
    int height = 0;
    int classes = 0;
    std::vector<std::string> files;
    try {
        width = index.at("width").get<int>();
        height = index.at("height").get<int>();
        classes = index.at("num_classes").get<int>();
        files = index.at("files").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("soft mask index " + index_path.string() + ": " + e.what());
    }
    if (static_cast<int>(files.size()) != classes) {
        throw FormatError("soft mask index lists " + std::to_string(files.size()) + " planes for " +
                          std::to_string(classes) + " classes");
    }
    check_dims(width, height);
    const std::size_t n = pixel_count(width, height);
    std::vector<double> probs(n * static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        const auto pgm = parse_pgm(read_file(index_path.parent_path() / files[c]));
        if (pgm.width != width || pgm.height != height) {
            throw FormatError("soft mask plane " + files[c] + " has wrong dimensions");
        }
        for (std::size_t p = 0; p < n; ++p) {
            probs[p * classes + c] = static_cast<double>(pgm.samples[p]) / pgm.maxval;
        }
    }
    for (std::size_t p = 0; p < n; ++p) {
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) {
            sum += probs[p * classes + c];
        }
        for (int c = 0; c < classes; ++c) {
            probs[p * classes + c] = sum > 0.0 ? probs[p * classes + c] / sum : 1.0 / classes;
        }
    }
    return SoftMask(width, height, classes, std::move(probs));
}

// --- conversions ------------------------------------------------------------

SoftMask one_hot(const LabelMask& mask)
{
    const auto k = static_cast<std::size_t>(mask.num_classes());
    std::vector<double> probs(mask.size() * k, 0.0);
    const auto labels = mask.labels();
    for (std::size_t p = 0; p < labels.size(); ++p) {
        probs[p * k + labels[p]] = 1.0;
    }
    return SoftMask(mask.width(), mask.height(), mask.num_classes(), std::move(probs));
}

LabelMask argmax_labels(const SoftMask& soft)
{
    LabelMask out(soft.width(), soft.height(), soft.num_classes());
    auto labels = MaskEditor(out).labels();
    for (std::size_t p = 0; p < soft.pixels(); ++p) {
        const auto v = soft.pixel(p);
        // max_element returns the first maximum, giving the lowest-index tie rule
        labels[p] = static_cast<std::uint8_t>(std::max_element(v.begin(), v.end()) - v.begin());
    }
    return out;
}

LabelMask binarize(const SoftMask& soft, double threshold)
{
    if (soft.num_classes() != 2) {
        throw ContractError("binarize requires a two-class soft mask, got " + std::to_string(soft.num_classes()));
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ContractError("binarize threshold must lie in (0, 1)");
    }
    LabelMask out(soft.width(), soft.height(), 2);
    auto labels = MaskEditor(out).labels();
    for (std::size_t p = 0; p < soft.pixels(); ++p) {
        labels[p] = soft.prob(p, 1) >= threshold ? 1 : 0;
    }
    return out;
}

} // namespace postdae
