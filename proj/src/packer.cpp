#include "sacsim/packer.hpp"

#include <stdexcept>
#include <string>

#include "bytes.hpp"
#include "sacsim/error.hpp"

namespace sac {

namespace {

constexpr int kPowerBias = 7;  // power code = exponent + 7
constexpr std::size_t kHeaderBytes = 8;

}  // namespace

CellCode encode_cell(unsigned index, PowTwoWeight w, unsigned group_size) {
    if (group_size == 0 || group_size > kMaxGroup) {
        throw std::out_of_range("group size " + std::to_string(group_size) + " outside [1, 8]");
    }
    if (index >= group_size) {
        throw std::out_of_range("cell index " + std::to_string(index) + " outside group of " +
                                std::to_string(group_size));
    }
    if (w.is_zero()) return CellCode{0};
    const auto power = static_cast<unsigned>(w.exponent() + kPowerBias);
    const unsigned sign = w.sign() < 0 ? 1u : 0u;
    return CellCode{static_cast<std::uint8_t>((index << 5) | (sign << 4) | power)};
}

std::pair<unsigned, PowTwoWeight> decode_cell(CellCode code) {
    const unsigned power = code.power();
    if (power > 7) {
        throw FormatError("malformed cell 0x" + std::to_string(code.byte) + ": reserved power code " +
                          std::to_string(power));
    }
    if (power == 0) {
        if (code.byte != 0) {
            throw FormatError("malformed cell " + std::to_string(code.byte) +
                              ": zero weight with non-zero index or sign");
        }
        return {0u, PowTwoWeight::zero()};
    }
    return {code.index(),
            PowTwoWeight::value(code.sign_bit() ? -1 : 1, static_cast<int>(power) - kPowerBias)};
}

std::optional<std::size_t> PackedLayer::source_channel(std::size_t r, std::size_t c) const {
    const auto code = cell(r, c);
    if (code.is_zero()) return std::nullopt;
    return c * group_size + code.index();
}

PackedLayer PackedLayer::slice(std::size_t row0, std::size_t nrows, std::size_t col0,
                               std::size_t ncols) const {
    if (row0 + nrows > rows || col0 + ncols > cols) {
        throw ShapeError("slice [" + std::to_string(row0) + "+" + std::to_string(nrows) + ", " +
                         std::to_string(col0) + "+" + std::to_string(ncols) + ") exceeds " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    PackedLayer out;
    out.rows = nrows;
    out.cols = ncols;
    out.group_size = group_size;
    out.cells.reserve(nrows * ncols);
    for (std::size_t r = 0; r < nrows; ++r)
        for (std::size_t c = 0; c < ncols; ++c) out.cells.push_back(cell(row0 + r, col0 + c));
    out.bias_fx.assign(bias_fx.begin() + static_cast<long>(row0),
                       bias_fx.begin() + static_cast<long>(row0 + nrows));
    return out;
}

PackedLayer combine_columns(const LayerSpec& layer) {
    if (!layer.bn_is_quantized()) {
        throw std::invalid_argument("combine_columns: batch norm must be quantized and folded first");
    }
    const auto& bn = layer.folded_bn();
    for (const auto& a : bn) {
        if (a.scale_exp != 0) {
            throw std::invalid_argument("combine_columns: batch norm scale must be folded into weights");
        }
    }
    const auto g = static_cast<std::size_t>(layer.groups);
    PackedLayer out;
    out.rows = layer.filters;
    out.group_size = static_cast<unsigned>(g);
    out.cols = layer.padded_channels() / g;
    out.cells.resize(out.rows * out.cols);
    out.bias_fx.reserve(out.rows);
    for (const auto& a : bn) out.bias_fx.push_back(a.bias_fx);

    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t col = 0; col < out.cols; ++col) {
            std::optional<std::size_t> best;
            std::size_t nonzero = 0;
            for (std::size_t k = 0; k < g; ++k) {
                const std::size_t ch = col * g + k;
                if (ch >= layer.channels) break;
                const auto w = layer.weights.at(r, ch);
                if (w.is_zero()) continue;
                ++nonzero;
                // Strictly larger wins, so the lowest channel keeps ties.
                if (!best || w.exponent() > layer.weights.at(r, *best).exponent()) best = ch;
            }
            if (!best) continue;
            out.dropped += nonzero - 1;
            out.cell(r, col) = encode_cell(static_cast<unsigned>(*best - col * g),
                                           layer.weights.at(r, *best), out.group_size);
        }
    }
    return out;
}

WeightMatrix unpack(const PackedLayer& packed, std::size_t channels) {
    if (channels > packed.channels() || channels + packed.group_size <= packed.channels()) {
        throw ShapeError("cannot unpack " + std::to_string(packed.cols) + " packed columns of group " +
                         std::to_string(packed.group_size) + " into " + std::to_string(channels) +
                         " channels");
    }
    WeightMatrix m(packed.rows, channels);
    for (std::size_t r = 0; r < packed.rows; ++r) {
        for (std::size_t c = 0; c < packed.cols; ++c) {
            const auto [index, w] = decode_cell(packed.cell(r, c));
            if (w.is_zero()) continue;
            const std::size_t ch = c * packed.group_size + index;
            if (ch >= channels) throw FormatError("cell routes to padding channel " + std::to_string(ch));
            m.at(r, ch) = w;
        }
    }
    return m;
}

void append_packed(std::vector<std::uint8_t>& out, const PackedLayer& p) {
    if (p.rows > 0xffff || p.cols > 0xffff) throw RangeError("packed layer too large for u16 header");
    detail::put_le(out, static_cast<std::uint16_t>(p.rows));
    detail::put_le(out, static_cast<std::uint16_t>(p.cols));
    out.push_back(static_cast<std::uint8_t>(p.group_size));
    out.insert(out.end(), 3, 0);
    for (const auto c : p.cells) out.push_back(c.byte);
    for (const auto b : p.bias_fx) detail::put_le(out, b);
}

std::vector<std::uint8_t> serialize_packed(const PackedLayer& p) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + p.cells.size() + 4 * p.bias_fx.size());
    append_packed(out, p);
    return out;
}

std::pair<PackedLayer, std::size_t> parse_packed_prefix(std::span<const std::uint8_t> bytes) {
    detail::ByteReader rd(bytes, "packed layer");
    PackedLayer p;
    p.rows = rd.get_le<std::uint16_t>();
    p.cols = rd.get_le<std::uint16_t>();
    p.group_size = rd.get_le<std::uint8_t>();
    if (p.group_size == 0 || p.group_size > kMaxGroup) {
        throw FormatError("packed layer: group size " + std::to_string(p.group_size) + " outside [1, 8]");
    }
    for (auto b : rd.take(3)) {
        if (b != 0) throw FormatError("packed layer: reserved header bytes must be zero");
    }
    const auto cells = rd.take(p.rows * p.cols);
    p.cells.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const CellCode code{cells[i]};
        const auto [index, w] = decode_cell(code);
        if (!w.is_zero() && index >= p.group_size) {
            throw FormatError("packed layer: cell " + std::to_string(i) + " index " +
                              std::to_string(index) + " outside group of " + std::to_string(p.group_size));
        }
        p.cells.push_back(code);
    }
    p.bias_fx.reserve(p.rows);
    for (std::size_t r = 0; r < p.rows; ++r) p.bias_fx.push_back(rd.get_le<std::int32_t>());
    return {std::move(p), rd.offset()};
}

PackedLayer parse_packed(std::span<const std::uint8_t> bytes) {
    auto [p, used] = parse_packed_prefix(bytes);
    if (used != bytes.size()) {
        throw FormatError("packed layer: " + std::to_string(bytes.size() - used) + " trailing bytes");
    }
    return std::move(p);
}

}  // namespace sac
