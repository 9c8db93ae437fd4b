#pragma once

// Scalar fixed-point rules shared by the simulator and the reference model.

#include <algorithm>
#include <cstdint>
#include <limits>

#include "sacsim/weight.hpp"

namespace sac {

using AccumWord = std::int32_t;

inline constexpr bool fits_accum(std::int64_t v) {
    return v >= std::numeric_limits<AccumWord>::min() && v <= std::numeric_limits<AccumWord>::max();
}

/// ReLU fused with re-quantization: negative -> 0, otherwise drop the 6 fractional
/// accumulator bits (floor) and clip to 255.
template <typename Int>
constexpr std::uint8_t relu_quantize(Int acc) {
    if (acc < 0) return 0;
    return static_cast<std::uint8_t>(std::min<Int>(acc >> kAccFracBits, 255));
}

}  // namespace sac
