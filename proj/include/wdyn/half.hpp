#pragma once

#include <cstdint>

namespace wdyn {

// IEEE 754 binary16 <-> binary32. Narrowing rounds to nearest, ties to even;
// NaN payloads are preserved as quiet NaNs.
float half_to_float(std::uint16_t bits) noexcept;
std::uint16_t float_to_half(float value) noexcept;

} // namespace wdyn
