#pragma once

#include <stdexcept>
#include <string>

namespace sac {

/// Raised when a manifest document cannot be parsed or violates a model invariant.
class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for values that cannot be represented in the fixed-point / power-of-two domain
/// (folded exponents out of range, 32-bit accumulator overflow, field overflow in an encoding).
class RangeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when binary input (cell bytes, packed layers, instruction streams, tensors) is malformed.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for geometry / shape disagreement between operands.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sac
