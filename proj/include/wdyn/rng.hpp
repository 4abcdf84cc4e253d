#pragma once

// Counter-based Philox4x32-10 generator. Every draw is a pure function of
// (seed, counter), so parallel producers can generate any subset of a stream
// in any order and still agree bit-for-bit.

#include <array>
#include <cmath>
#include <cstdint>

namespace wdyn::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Counter philox4x32(Counter ctr, Key key) noexcept {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

// Stream identifiers keep draws for different purposes disjoint under one seed.
enum class Stream : std::uint32_t {
    sde_increment = 1,
    sde_initial = 2,
    model_init = 3,
    probe_batch = 4,
    batch_sampling = 5,
};

inline Key make_key(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Raw 128-bit block for (seed, stream, a, b).
inline Counter block(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint32_t b) noexcept {
    return philox4x32({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b,
                       static_cast<std::uint32_t>(stream)},
                      make_key(seed));
}

// Uniform on the open interval (0, 1) with 52 random bits. The half-step
// offset keeps both ends out; with 53 bits the top value would round to 1.
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

inline double uniform(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint32_t b) noexcept {
    const Counter r = block(seed, stream, a, b);
    return to_open_unit(r[0], r[1]);
}

// Standard normal via Box-Muller on one block (cosine branch only).
inline double normal(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint32_t b) noexcept {
    const Counter r = block(seed, stream, a, b);
    const double u1 = to_open_unit(r[0], r[1]);
    const double u2 = to_open_unit(r[2], r[3]);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

} // namespace wdyn::rng
