#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sacsim/model.hpp"
#include "sacsim/packer.hpp"

namespace sac {

/// Physical systolic array size. Tile dimensions travel in 8-bit instruction fields,
/// so both sides are limited to 255.
struct ArrayConfig {
    std::size_t rows = 128;
    std::size_t cols = 64;
    unsigned max_group = kMaxGroup;

    /// Parses "RxC", e.g. "128x64". Throws std::invalid_argument.
    static ArrayConfig parse(const std::string& text);
    std::string to_string() const;
    friend bool operator==(const ArrayConfig&, const ArrayConfig&) = default;
};

struct Span1D {
    std::size_t offset = 0;
    std::size_t length = 0;
    friend bool operator==(const Span1D&, const Span1D&) = default;
};

/// Vertical tiles split filters, horizontal tiles split packed columns.
struct TilePlan {
    std::vector<Span1D> vertical;
    std::vector<Span1D> horizontal;

    std::size_t tile_count() const { return vertical.size() * horizontal.size(); }
};

TilePlan plan_tiles(std::size_t filters, std::size_t packed_cols, const ArrayConfig& cfg);
TilePlan plan_tiles(const PackedLayer& packed, const ArrayConfig& cfg);

struct Instruction {
    enum class Kind : std::uint8_t { LoadWeights, MatMul };

    Kind kind = Kind::LoadWeights;
    std::uint32_t tile_rows = 0;  ///< LoadWeights only
    std::uint32_t tile_cols = 0;  ///< LoadWeights only
    std::uint32_t input_h = 0;    ///< MatMul only
    std::uint32_t input_w = 0;    ///< MatMul only

    static Instruction load_weights(std::uint32_t rows, std::uint32_t cols) {
        return {Kind::LoadWeights, rows, cols, 0, 0};
    }
    static Instruction matmul(std::uint32_t h, std::uint32_t w) { return {Kind::MatMul, 0, 0, h, w}; }
    bool is_load() const { return kind == Kind::LoadWeights; }

    friend bool operator==(const Instruction&, const Instruction&) = default;
};

/// 64-bit word: bit 0 load-weights, bit 1 matrix-multiply, bits 15..8 tile width,
/// bits 23..16 tile height, bits 39..24 input width, bits 55..40 input height, rest zero.
/// Throws RangeError when a field does not fit.
std::uint64_t encode_instruction(const Instruction& i);
/// Throws FormatError for words with both/neither kind bits or stray bits set.
Instruction decode_instruction(std::uint64_t word);

/// The alternating load/multiply stream for a model: per layer, vertical tiles outer,
/// horizontal tiles inner, one LoadWeights + MatMul pair per tile. `plans` has one
/// entry per layer followed by one for the fc.
std::vector<Instruction> emit_instructions(const std::vector<TilePlan>& plans, const ModelManifest& m);

/// One load/multiply pair with its placement inside the layer.
struct TileStep {
    std::size_t layer = 0;  ///< index into layers; layers.size() is the fc
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    PackedLayer payload;
    std::size_t input_h = 0;
    std::size_t input_w = 0;
    bool accumulate = false;  ///< adds onto the partial sums of the previous horizontal tile
    bool completes = true;    ///< last horizontal tile of its vertical range

    Instruction load() const {
        return Instruction::load_weights(static_cast<std::uint32_t>(payload.rows),
                                         static_cast<std::uint32_t>(payload.cols));
    }
    Instruction mul() const {
        return Instruction::matmul(static_cast<std::uint32_t>(input_h), static_cast<std::uint32_t>(input_w));
    }
};

/// A model lowered onto one array: folded layers, their packed forms and the tile schedule.
struct CompiledModel {
    ModelManifest model;  ///< batch norm folded
    ArrayConfig array;
    std::vector<PackedLayer> packed;  ///< one per layer, then the fc
    std::vector<TilePlan> plans;
    std::vector<TileStep> steps;

    std::vector<Instruction> instructions() const;
    std::size_t dropped_weights() const;
};

/// Folds batch norm, combines columns, plans tiles and emits the schedule.
CompiledModel compile_model(const ModelManifest& m, const ArrayConfig& cfg);

/// Stream file: little-endian u64 words; each LoadWeights word is followed by the
/// packed-layer record of its tile, then the MatMul word.
std::vector<std::uint8_t> serialize_stream(const CompiledModel& c);

struct StreamEntry {
    Instruction load;
    PackedLayer payload;
    Instruction mul;
};
std::vector<StreamEntry> parse_stream(std::span<const std::uint8_t> bytes);

/// Attaches a parsed stream to the manifest it was compiled from, recovering each tile's
/// layer and placement from the tiling order. Weights and biases come from the stream.
/// Throws FormatError when the stream does not fit the manifest.
CompiledModel bind_stream(const std::vector<StreamEntry>& stream, const ModelManifest& m);

}  // namespace sac
