#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sac {

/// Spatial translation applied to one channel before the 1x1 convolution.
/// A positive dx moves content right, a positive dy moves it down.
struct ShiftOffset {
    int dy = 0;
    int dx = 0;
    friend constexpr bool operator==(ShiftOffset, ShiftOffset) = default;
};

/// The nine shift offsets in row-major order, used round-robin for channels
/// that have no explicit direction.
std::vector<ShiftOffset> round_robin_shifts(std::size_t channels);

struct Shape3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t plane() const { return height * width; }
    std::size_t size() const { return channels * height * width; }
    friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

/// 8-bit activation tensor in CHW order. All layers share one fixed-point scale, 2^lsb_exp.
class QuantTensor {
public:
    QuantTensor() = default;
    explicit QuantTensor(Shape3 shape, int lsb_exp = 0);
    QuantTensor(Shape3 shape, std::vector<std::uint8_t> values, int lsb_exp = 0);

    const Shape3& shape() const { return shape_; }
    int lsb_exp() const { return lsb_exp_; }

    std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const {
        return values_[(c * shape_.height + y) * shape_.width + x];
    }
    std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) {
        return values_[(c * shape_.height + y) * shape_.width + x];
    }

    std::span<const std::uint8_t> values() const { return values_; }
    std::span<std::uint8_t> values() { return values_; }
    std::span<const std::uint8_t> channel(std::size_t c) const {
        return std::span<const std::uint8_t>(values_).subspan(c * shape_.plane(), shape_.plane());
    }

    friend bool operator==(const QuantTensor&, const QuantTensor&) = default;

private:
    Shape3 shape_;
    int lsb_exp_ = 0;
    std::vector<std::uint8_t> values_;
};

/// Space-to-depth: input pixel (ch, y, x) moves to channel C*((y%r)*r + x%r) + ch at
/// (y/r, x/r). With C = 3 and r = 4 a 3x224x224 image becomes 48x56x56.
QuantTensor reshape_input(const QuantTensor& img, int factor);

/// Inverse of reshape_input given the original channel count.
QuantTensor restore_input(const QuantTensor& reshaped, int factor, std::size_t channels);

/// Translates every channel by its offset; vacated positions become zero.
QuantTensor channel_shift(const QuantTensor& t, std::span<const ShiftOffset> dirs);

/// Keeps every `stride`-th row and column starting at 0 (a strided 1x1 convolution's input
/// sampling). Output dims are ceil(H/stride) x ceil(W/stride).
QuantTensor subsample(const QuantTensor& t, int stride);

/// Raw tensor file: three little-endian u32 dims (C, H, W), then C*H*W bytes row-major.
std::vector<std::uint8_t> serialize_tensor(const QuantTensor& t);
QuantTensor parse_tensor(std::span<const std::uint8_t> bytes, int lsb_exp = 0);

}  // namespace sac
