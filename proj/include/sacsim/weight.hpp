#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace sac {

inline constexpr int kMinExponent = -6;
inline constexpr int kMaxExponent = 0;

/// Accumulator words are kept in units of 2^kAccFracBits data LSBs so that every
/// product of an 8-bit datum and a representable power-of-two weight is an integer.
inline constexpr int kAccFracBits = -kMinExponent;

/// A signed power of two 2^exponent with exponent in [-6, 0], or exact zero.
class PowTwoWeight {
public:
    constexpr PowTwoWeight() = default;

    static constexpr PowTwoWeight zero() { return {}; }
    /// Throws RangeError when exponent is outside [-6, 0] or sign is not +/-1.
    static PowTwoWeight value(int sign, int exponent);

    constexpr bool is_zero() const { return sign_ == 0; }
    constexpr int sign() const { return sign_; }
    constexpr int exponent() const { return exponent_; }

    double to_double() const;
    /// Signed integer product with `data`, in accumulator units (data << (exponent + 6)).
    constexpr std::int64_t scale(std::int64_t data) const {
        if (is_zero()) return 0;
        const std::int64_t mag = data * (std::int64_t{1} << (exponent_ + kAccFracBits));
        return sign_ < 0 ? -mag : mag;
    }

    std::string to_string() const;

    friend constexpr bool operator==(PowTwoWeight, PowTwoWeight) = default;

private:
    constexpr PowTwoWeight(int sign, int exponent) : sign_(sign), exponent_(exponent) {}

    // sign_ == 0 encodes Zero; exponent_ is then 0.
    std::int8_t sign_ = 0;
    std::int8_t exponent_ = 0;
};

/// Power-of-two exponent nearest to |x| in the log domain, ties rounding toward +inf.
/// Unclamped; x must be finite and non-zero.
int nearest_log2(double x);

/// Rounds a real weight to the nearest signed power of two in [2^-6, 2^0].
/// Magnitudes below 2^-6.5 become Zero; larger magnitudes clamp to the range.
PowTwoWeight log_quantize(double x);

}  // namespace sac
