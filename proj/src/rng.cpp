#include "postdae/rng.hpp"

#include <cmath>
#include <numbers>

namespace postdae {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t salt)
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ index);
    return splitmix64(h ^ salt);
}

} // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t index, std::uint64_t salt)
    : seed_(seed), index_(index), salt_(salt), engine_(mix_seed(seed, index, salt))
{
}

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi)
{
    if (hi <= lo) {
        return lo;
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = span == 0 ? 0 : (~std::uint64_t{0} / span) * span;
    std::uint64_t r = engine_();
    while (limit != 0 && r >= limit) {
        r = engine_();
    }
    return lo + static_cast<std::int64_t>(span == 0 ? r : r % span);
}

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Rng Rng::fork(std::uint64_t salt) const
{
    return Rng(mix_seed(seed_, index_, salt_), salt, 0x464f524bULL);
}

} // namespace postdae
