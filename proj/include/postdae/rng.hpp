#pragma once

#include <cstdint>
#include <random>

namespace postdae {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic random stream.
///
/// Every stream is an std::mt19937_64 seeded from splitmix64(seed, index, salt),
/// so streams for different (seed, index, salt) triples are independent and a
/// stream never depends on how many draws another stream has made. Real and
/// normal variates are produced by hand-written transforms rather than the
/// <random> distributions so the sequence is fixed by this library alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t index = 0, std::uint64_t salt = 0);

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi] (inclusive).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p) { return uniform() < p; }
    /// Standard normal via Box-Muller (one variate cached).
    double normal();

    /// Derive a child stream; does not advance this stream.
    Rng fork(std::uint64_t salt) const;

private:
    std::uint64_t seed_;
    std::uint64_t index_;
    std::uint64_t salt_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Stream salts used by the library so unrelated consumers never share draws.
namespace stream {
inline constexpr std::uint64_t scene = 0x5343454e45ULL;
inline constexpr std::uint64_t scene_noise = 0x4e4f495345ULL;
inline constexpr std::uint64_t degrade = 0x4445475241ULL;
inline constexpr std::uint64_t classifier = 0x434c415353ULL;
inline constexpr std::uint64_t init = 0x494e4954ULL;
inline constexpr std::uint64_t shuffle = 0x5348554646ULL;
inline constexpr std::uint64_t occlusion = 0x4f43434cULL;
} // namespace stream

} // namespace postdae
