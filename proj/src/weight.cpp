#include "sacsim/weight.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sacsim/error.hpp"

namespace sac {

PowTwoWeight PowTwoWeight::value(int sign, int exponent) {
    if (sign != 1 && sign != -1) {
        throw RangeError("weight sign must be +1 or -1, got " + std::to_string(sign));
    }
    if (exponent < kMinExponent || exponent > kMaxExponent) {
        throw RangeError("weight exponent " + std::to_string(exponent) + " outside [-6, 0]");
    }
    return PowTwoWeight(sign, exponent);
}

double PowTwoWeight::to_double() const {
    if (is_zero()) return 0.0;
    return sign_ * std::ldexp(1.0, exponent_);
}

std::string PowTwoWeight::to_string() const {
    if (is_zero()) return "0";
    return std::string(sign_ < 0 ? "-" : "+") + "2^" + std::to_string(exponent_);
}

int nearest_log2(double x) {
    if (!std::isfinite(x) || x == 0.0) {
        throw std::invalid_argument("nearest_log2 requires a finite non-zero value");
    }
    // |x| = m * 2^q with m in [0.5, 1). log2|x| rounds to q when m > 2^-0.5, else q - 1.
    // 2^-0.5 is irrational so no double sits exactly on the boundary; the nearest double
    // to it lies above the true value, which makes `>=` the exact comparison.
    int q = 0;
    const double m = std::frexp(std::fabs(x), &q);
    return m >= M_SQRT1_2 ? q : q - 1;
}

PowTwoWeight log_quantize(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("log_quantize requires a finite value");
    if (x == 0.0) return PowTwoWeight::zero();
    const int e = nearest_log2(x);
    if (e < kMinExponent) return PowTwoWeight::zero();
    return PowTwoWeight::value(x < 0 ? -1 : 1, std::min(e, kMaxExponent));
}

}  // namespace sac
