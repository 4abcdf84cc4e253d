#include "wdyn/half.hpp"
#include "wdyn/rng.hpp"

#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <vector>

using namespace wdyn;

TEST_SUITE("rng") {

TEST_CASE("philox4x32-10 known answers") {
    // Reference vectors published with the Random123 library.
    CHECK(rng::philox4x32({0, 0, 0, 0}, {0, 0}) ==
          rng::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(rng::philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
          rng::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(rng::philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
          rng::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("draws are pure functions of their coordinates") {
    const double a = rng::normal(7, rng::Stream::sde_increment, 12, 3);
    const double b = rng::normal(7, rng::Stream::sde_increment, 12, 3);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    CHECK(rng::normal(7, rng::Stream::sde_increment, 12, 4) != a);
    CHECK(rng::normal(7, rng::Stream::sde_initial, 12, 3) != a);
    CHECK(rng::normal(8, rng::Stream::sde_increment, 12, 3) != a);
}

TEST_CASE("uniform stays inside the open unit interval") {
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const double u = rng::uniform(1, rng::Stream::batch_sampling, i, 0);
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
    CHECK(rng::to_open_unit(0, 0) > 0.0);
    CHECK(rng::to_open_unit(0xffffffffu, 0xffffffffu) < 1.0);
}

TEST_CASE("normal draws have unit moments") {
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng::normal(3, rng::Stream::probe_batch, static_cast<std::uint64_t>(i), 0);
        s1 += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    CHECK(std::abs(s1 / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.01);
    // five standard errors of the fourth moment (sqrt(96 / n))
    CHECK(std::abs(s4 / n - 3.0) < 0.11);
}

} // TEST_SUITE rng

TEST_SUITE("half") {

TEST_CASE("exactly representable values survive the round trip") {
    for (float v : {0.0f, -0.0f, 1.0f, -2.5f, 0.333251953125f, 65504.0f, 6.103515625e-05f, 5.960464477539063e-08f}) {
        const std::uint16_t h = float_to_half(v);
        CHECK(std::bit_cast<std::uint32_t>(half_to_float(h)) == std::bit_cast<std::uint32_t>(v));
    }
}

TEST_CASE("narrowing matches a brute-force nearest search") {
    // Oracle: decode all finite half patterns and pick the nearest, ties to the
    // even pattern.
    std::vector<std::pair<float, std::uint16_t>> table;
    for (std::uint32_t b = 0; b < 0x7c00; ++b) {
        table.emplace_back(half_to_float(static_cast<std::uint16_t>(b)), static_cast<std::uint16_t>(b));
    }
    auto nearest = [&](float v) -> std::uint16_t {
        const float a = std::abs(v);
        std::uint16_t best = 0;
        double best_d = 1e300;
        for (const auto& [f, b] : table) {
            const double d = std::abs(double(f) - double(a));
            if (d < best_d || (d == best_d && (b & 1u) == 0)) {
                best_d = d;
                best = b;
            }
        }
        return static_cast<std::uint16_t>(best | (std::signbit(v) ? 0x8000u : 0u));
    };
    std::uint32_t state = 12345;
    for (int i = 0; i < 400; ++i) {
        state = state * 1664525u + 1013904223u;
        const float mag = std::ldexp(float(state >> 8) / float(1u << 24), static_cast<int>(state % 40) - 26);
        const float v = (state & 1u) ? -mag : mag;
        INFO("value " << v);
        CHECK(float_to_half(v) == nearest(v));
    }
    // halfway between 1 and the next half (1 + 2^-10): ties to even -> 1
    CHECK(float_to_half(1.0f + 0x1.0p-11f) == 0x3c00);
    CHECK(float_to_half(1.0f + 3 * 0x1.0p-11f) == 0x3c02);
}

TEST_CASE("overflow, infinities and NaN") {
    CHECK(float_to_half(70000.0f) == 0x7c00);
    CHECK(float_to_half(-70000.0f) == 0xfc00);
    CHECK(std::isinf(half_to_float(0x7c00)));
    CHECK(std::isnan(half_to_float(float_to_half(std::nanf("")))));
}

} // TEST_SUITE half
