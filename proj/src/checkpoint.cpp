#include "postdae/checkpoint.hpp"

#include "postdae/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace postdae::ad {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'A', 'E'};
constexpr std::uint32_t kMaxCount = 1u << 28;

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v)
    {
        for (int i = 0; i < 4; ++i) {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f64(double d)
    {
        const auto v = std::bit_cast<std::uint64_t>(d);
        for (int i = 0; i < 8; ++i) {
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8()
    {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        }
        return v;
    }
    double f64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        }
        return std::bit_cast<double>(v);
    }
    std::uint32_t count(const char* what)
    {
        const auto n = u32();
        if (n > kMaxCount) {
            throw FormatError(std::string("checkpoint: implausible ") + what + " count");
        }
        return n;
    }
    void expect_magic()
    {
        need(4);
        if (std::memcmp(bytes_.data(), kMagic, 4) != 0) {
            throw FormatError("checkpoint: bad magic (expected PDAE)");
        }
        pos_ += 4;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n) {
            throw FormatError("checkpoint: truncated");
        }
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt)
{
    Writer w;
    w.raw(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.config.size()));
    for (auto v : ckpt.config) {
        w.u32(v);
    }
    w.u32(static_cast<std::uint32_t>(ckpt.layers.size()));
    for (const auto& l : ckpt.layers) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.u8(static_cast<std::uint8_t>(l.stride));
        w.u32(static_cast<std::uint32_t>(l.in_channels));
        w.u32(static_cast<std::uint32_t>(l.out_channels));
        w.u32(static_cast<std::uint32_t>(l.units));
    }
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (double v : t.data()) {
            w.f64(v);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    r.expect_magic();
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const auto words = r.count("config");
    for (std::uint32_t i = 0; i < words; ++i) {
        ckpt.config.push_back(r.u32());
    }
    const auto layers = r.count("layer");
    for (std::uint32_t i = 0; i < layers; ++i) {
        LayerSpec l;
        const auto kind = r.u8();
        if (kind > static_cast<std::uint8_t>(LayerKind::softmax_channels)) {
            throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind));
        }
        l.kind = static_cast<LayerKind>(kind);
        l.stride = r.u8();
        l.in_channels = static_cast<int>(r.u32());
        l.out_channels = static_cast<int>(r.u32());
        l.units = static_cast<int>(r.u32());
        ckpt.layers.push_back(l);
    }
    const auto tensors = r.count("tensor");
    for (std::uint32_t i = 0; i < tensors; ++i) {
        const auto rank = r.count("rank");
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) {
            shape.push_back(r.count("dimension"));
        }
        const auto n = numel(shape);
        if (n > kMaxCount) {
            throw FormatError("checkpoint: tensor too large");
        }
        std::vector<double> data(n);
        for (auto& v : data) {
            v = r.f64();
        }
        ckpt.tensors.emplace_back(std::move(shape), std::move(data), false);
    }
    if (!r.done()) {
        throw FormatError("checkpoint: trailing bytes");
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
    return decode_checkpoint(bytes);
}

} // namespace postdae::ad
