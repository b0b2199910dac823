#pragma once

#include <cstdint>
#include <span>

namespace gdvol {

/// IEEE 754 binary16 encoding with round-to-nearest-even. Overflow saturates
/// to +/-Inf, NaN stays NaN.
[[nodiscard]] std::uint16_t encode_half(float value);

/// Exact widening of a binary16 code to binary32.
[[nodiscard]] float decode_half(std::uint16_t code);

void encode_half(std::span<const float> in, std::span<std::uint16_t> out);
void decode_half(std::span<const std::uint16_t> in, std::span<float> out);

}  // namespace gdvol
