#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sacsim/model.hpp"
#include "sacsim/weight.hpp"

namespace sac {

/// 8-bit systolic cell configuration.
///
///   bit 7..5  index  position of the kept weight inside its channel group
///   bit 4     sign   1 = negative
///   bit 3..0  power  0000 = zero weight, 0001 = 2^-6 ... 0111 = 2^0
///
/// Power codes 1000-1111 are reserved. The zero cell is the all-zero byte.
struct CellCode {
    std::uint8_t byte = 0;

    constexpr unsigned index() const { return byte >> 5; }
    constexpr unsigned sign_bit() const { return (byte >> 4) & 1u; }
    constexpr unsigned power() const { return byte & 0x0fu; }
    constexpr bool is_zero() const { return power() == 0; }

    friend constexpr bool operator==(CellCode, CellCode) = default;
};

inline constexpr unsigned kMaxGroup = 8;

/// Throws std::out_of_range when index >= group_size or group_size > 8.
CellCode encode_cell(unsigned index, PowTwoWeight w, unsigned group_size = kMaxGroup);

/// Throws FormatError on a reserved power code or a non-canonical zero cell.
std::pair<unsigned, PowTwoWeight> decode_cell(CellCode code);

/// A layer after column combining: f rows by ceil(c / g) packed columns.
struct PackedLayer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    unsigned group_size = 1;
    std::vector<CellCode> cells;        ///< rows x cols, row-major
    std::vector<std::int32_t> bias_fx;  ///< one per row
    std::size_t dropped = 0;            ///< non-zero weights pruned while combining

    CellCode cell(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
    CellCode& cell(std::size_t r, std::size_t c) { return cells[r * cols + c]; }
    /// Original input channel of the weight kept at (r, c), or nullopt for a zero cell.
    std::optional<std::size_t> source_channel(std::size_t r, std::size_t c) const;
    std::size_t channels() const { return cols * group_size; }

    /// Sub-block of rows [row0, row0 + nrows) and packed columns [col0, col0 + ncols).
    PackedLayer slice(std::size_t row0, std::size_t nrows, std::size_t col0, std::size_t ncols) const;

    friend bool operator==(const PackedLayer& a, const PackedLayer& b) {
        return a.rows == b.rows && a.cols == b.cols && a.group_size == b.group_size &&
               a.cells == b.cells && a.bias_fx == b.bias_fx;
    }
};

/// Keeps the largest-magnitude non-zero weight of every (row, aligned group of g channels),
/// lowest channel winning ties, and encodes it. Channels are zero-padded up to a multiple of g.
/// Batch norm must already be folded (quantized, scale_exp == 0); its biases become bias_fx.
PackedLayer combine_columns(const LayerSpec& layer);

/// Expands a packed layer back to a sparse filters x channels matrix.
WeightMatrix unpack(const PackedLayer& packed, std::size_t channels);

/// Binary form: u16 rows, u16 cols, u8 g, 3 reserved zero bytes, rows*cols cell bytes
/// row-major, then rows little-endian i32 biases.
std::vector<std::uint8_t> serialize_packed(const PackedLayer& p);
void append_packed(std::vector<std::uint8_t>& out, const PackedLayer& p);
PackedLayer parse_packed(std::span<const std::uint8_t> bytes);
/// Parses one record from the front of `bytes`, returning it and the bytes consumed.
std::pair<PackedLayer, std::size_t> parse_packed_prefix(std::span<const std::uint8_t> bytes);

}  // namespace sac
