#include "sacsim/tensor.hpp"

#include <array>

#include "bytes.hpp"
#include "sacsim/error.hpp"

namespace sac {

std::vector<ShiftOffset> round_robin_shifts(std::size_t channels) {
    static constexpr std::array<ShiftOffset, 9> kOffsets = {{
        {-1, -1}, {-1, 0}, {-1, 1},
        {0, -1},  {0, 0},  {0, 1},
        {1, -1},  {1, 0},  {1, 1},
    }};
    std::vector<ShiftOffset> dirs(channels);
    for (std::size_t c = 0; c < channels; ++c) dirs[c] = kOffsets[c % kOffsets.size()];
    return dirs;
}

std::string to_string(const Shape3& s) {
    return "(" + std::to_string(s.channels) + ", " + std::to_string(s.height) + ", " +
           std::to_string(s.width) + ")";
}

QuantTensor::QuantTensor(Shape3 shape, int lsb_exp)
    : shape_(shape), lsb_exp_(lsb_exp), values_(shape.size(), 0) {}

QuantTensor::QuantTensor(Shape3 shape, std::vector<std::uint8_t> values, int lsb_exp)
    : shape_(shape), lsb_exp_(lsb_exp), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
        throw ShapeError("tensor of shape " + to_string(shape_) + " needs " +
                         std::to_string(shape_.size()) + " values, got " +
                         std::to_string(values_.size()));
    }
}

namespace {

void check_factor(int factor) {
    if (factor != 1 && factor != 2 && factor != 4) {
        throw ShapeError("reshape factor must be 1, 2 or 4, got " + std::to_string(factor));
    }
}

}  // namespace

QuantTensor reshape_input(const QuantTensor& img, int factor) {
    check_factor(factor);
    const auto& in = img.shape();
    const auto r = static_cast<std::size_t>(factor);
    if (in.height % r != 0 || in.width % r != 0) {
        throw ShapeError("input " + to_string(in) + " is not divisible by reshape factor " +
                         std::to_string(factor));
    }
    QuantTensor out({in.channels * r * r, in.height / r, in.width / r}, img.lsb_exp());
    for (std::size_t ch = 0; ch < in.channels; ++ch) {
        for (std::size_t y = 0; y < in.height; ++y) {
            for (std::size_t x = 0; x < in.width; ++x) {
                const std::size_t group = (y % r) * r + (x % r);
                out.at(in.channels * group + ch, y / r, x / r) = img.at(ch, y, x);
            }
        }
    }
    return out;
}

QuantTensor restore_input(const QuantTensor& reshaped, int factor, std::size_t channels) {
    check_factor(factor);
    const auto& s = reshaped.shape();
    const auto r = static_cast<std::size_t>(factor);
    if (channels == 0 || s.channels != channels * r * r) {
        throw ShapeError("cannot restore " + to_string(s) + " to " + std::to_string(channels) +
                         " channels with factor " + std::to_string(factor));
    }
    QuantTensor out({channels, s.height * r, s.width * r}, reshaped.lsb_exp());
    for (std::size_t c = 0; c < s.channels; ++c) {
        const std::size_t group = c / channels;
        const std::size_t ch = c % channels;
        for (std::size_t y = 0; y < s.height; ++y) {
            for (std::size_t x = 0; x < s.width; ++x) {
                out.at(ch, y * r + group / r, x * r + group % r) = reshaped.at(c, y, x);
            }
        }
    }
    return out;
}

QuantTensor channel_shift(const QuantTensor& t, std::span<const ShiftOffset> dirs) {
    const auto& s = t.shape();
    if (dirs.size() != s.channels) {
        throw ShapeError("channel_shift: " + std::to_string(dirs.size()) +
                         " directions for " + std::to_string(s.channels) + " channels");
    }
    QuantTensor out(s, t.lsb_exp());
    const auto h = static_cast<long>(s.height);
    const auto w = static_cast<long>(s.width);
    for (std::size_t c = 0; c < s.channels; ++c) {
        const ShiftOffset d = dirs[c];
        for (long y = 0; y < h; ++y) {
            const long sy = y - d.dy;
            if (sy < 0 || sy >= h) continue;
            for (long x = 0; x < w; ++x) {
                const long sx = x - d.dx;
                if (sx < 0 || sx >= w) continue;
                out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                    t.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
        }
    }
    return out;
}

QuantTensor subsample(const QuantTensor& t, int stride) {
    if (stride < 1) throw ShapeError("stride must be positive");
    if (stride == 1) return t;
    const auto st = static_cast<std::size_t>(stride);
    const auto& s = t.shape();
    QuantTensor out({s.channels, (s.height + st - 1) / st, (s.width + st - 1) / st}, t.lsb_exp());
    const auto& o = out.shape();
    for (std::size_t c = 0; c < o.channels; ++c)
        for (std::size_t y = 0; y < o.height; ++y)
            for (std::size_t x = 0; x < o.width; ++x) out.at(c, y, x) = t.at(c, y * st, x * st);
    return out;
}

std::vector<std::uint8_t> serialize_tensor(const QuantTensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + t.shape().size());
    detail::put_le(out, static_cast<std::uint32_t>(t.shape().channels));
    detail::put_le(out, static_cast<std::uint32_t>(t.shape().height));
    detail::put_le(out, static_cast<std::uint32_t>(t.shape().width));
    out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
}

QuantTensor parse_tensor(std::span<const std::uint8_t> bytes, int lsb_exp) {
    detail::ByteReader rd(bytes, "tensor");
    Shape3 s;
    s.channels = rd.get_le<std::uint32_t>();
    s.height = rd.get_le<std::uint32_t>();
    s.width = rd.get_le<std::uint32_t>();
    if (rd.remaining() != s.size()) {
        throw FormatError("tensor: header " + to_string(s) + " expects " + std::to_string(s.size()) +
                          " value bytes, file has " + std::to_string(rd.remaining()));
    }
    auto data = rd.take(s.size());
    return QuantTensor(s, std::vector<std::uint8_t>(data.begin(), data.end()), lsb_exp);
}

}  // namespace sac
