#include "sacsim/scheduler.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "bytes.hpp"
#include "sacsim/error.hpp"

namespace sac {

namespace {

constexpr std::uint64_t kLoadBit = 1u << 0;
constexpr std::uint64_t kMulBit = 1u << 1;
constexpr unsigned kTileWidthShift = 8;
constexpr unsigned kTileHeightShift = 16;
constexpr unsigned kInputWidthShift = 24;
constexpr unsigned kInputHeightShift = 40;
constexpr std::uint64_t kTileMask = 0xff;
constexpr std::uint64_t kInputMask = 0xffff;
constexpr std::uint64_t kUsedBits = kLoadBit | kMulBit | (kTileMask << kTileWidthShift) |
                                    (kTileMask << kTileHeightShift) | (kInputMask << kInputWidthShift) |
                                    (kInputMask << kInputHeightShift);

std::vector<Span1D> split(std::size_t total, std::size_t step) {
    std::vector<Span1D> out;
    for (std::size_t off = 0; off < total; off += step) out.push_back({off, std::min(step, total - off)});
    return out;
}

void check_array(const ArrayConfig& cfg) {
    if (cfg.rows == 0 || cfg.cols == 0) throw std::invalid_argument("array dimensions must be >= 1");
    if (cfg.rows > kTileMask || cfg.cols > kTileMask) {
        throw std::invalid_argument("array dimensions must be <= 255 to fit the instruction encoding");
    }
}

std::size_t parse_dim(std::string_view s, const std::string& text) {
    std::size_t v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || s.empty()) {
        throw std::invalid_argument("array must be given as RxC, got '" + text + "'");
    }
    return v;
}

}  // namespace

ArrayConfig ArrayConfig::parse(const std::string& text) {
    const auto x = text.find_first_of("xX");
    if (x == std::string::npos) throw std::invalid_argument("array must be given as RxC, got '" + text + "'");
    ArrayConfig cfg;
    cfg.rows = parse_dim(std::string_view(text).substr(0, x), text);
    cfg.cols = parse_dim(std::string_view(text).substr(x + 1), text);
    check_array(cfg);
    return cfg;
}

std::string ArrayConfig::to_string() const { return std::to_string(rows) + "x" + std::to_string(cols); }

TilePlan plan_tiles(std::size_t filters, std::size_t packed_cols, const ArrayConfig& cfg) {
    check_array(cfg);
    return {split(filters, cfg.rows), split(packed_cols, cfg.cols)};
}

TilePlan plan_tiles(const PackedLayer& packed, const ArrayConfig& cfg) {
    return plan_tiles(packed.rows, packed.cols, cfg);
}

std::uint64_t encode_instruction(const Instruction& i) {
    auto field = [](std::uint64_t v, std::uint64_t mask, const char* name) {
        if (v > mask) throw RangeError(std::string(name) + " " + std::to_string(v) + " does not fit its field");
        return v;
    };
    if (i.is_load()) {
        if (i.input_h != 0 || i.input_w != 0) throw RangeError("load-weights carries no input geometry");
        return kLoadBit | (field(i.tile_cols, kTileMask, "tile width") << kTileWidthShift) |
               (field(i.tile_rows, kTileMask, "tile height") << kTileHeightShift);
    }
    if (i.tile_rows != 0 || i.tile_cols != 0) throw RangeError("matrix-multiply carries no tile geometry");
    return kMulBit | (field(i.input_w, kInputMask, "input width") << kInputWidthShift) |
           (field(i.input_h, kInputMask, "input height") << kInputHeightShift);
}

Instruction decode_instruction(std::uint64_t word) {
    if ((word & ~kUsedBits) != 0) throw FormatError("instruction word has reserved bits set");
    const bool load = (word & kLoadBit) != 0;
    const bool mul = (word & kMulBit) != 0;
    if (load == mul) throw FormatError("instruction word must set exactly one of the kind bits");
    const auto get = [&](unsigned shift, std::uint64_t mask) {
        return static_cast<std::uint32_t>((word >> shift) & mask);
    };
    if (load) {
        if (get(kInputWidthShift, kInputMask) != 0 || get(kInputHeightShift, kInputMask) != 0) {
            throw FormatError("load-weights word has input geometry set");
        }
        return Instruction::load_weights(get(kTileHeightShift, kTileMask), get(kTileWidthShift, kTileMask));
    }
    if (get(kTileWidthShift, kTileMask) != 0 || get(kTileHeightShift, kTileMask) != 0) {
        throw FormatError("matrix-multiply word has tile geometry set");
    }
    return Instruction::matmul(get(kInputHeightShift, kInputMask), get(kInputWidthShift, kInputMask));
}

std::vector<Instruction> emit_instructions(const std::vector<TilePlan>& plans, const ModelManifest& m) {
    if (plans.size() != m.layers.size() + 1) {
        throw std::invalid_argument("emit_instructions: need one plan per layer plus the fc");
    }
    const auto dims = m.matmul_dims();
    std::vector<Instruction> out;
    for (std::size_t l = 0; l < plans.size(); ++l) {
        const auto [h, w] = dims[l];
        for (const auto& v : plans[l].vertical) {
            for (const auto& hz : plans[l].horizontal) {
                out.push_back(Instruction::load_weights(static_cast<std::uint32_t>(v.length),
                                                        static_cast<std::uint32_t>(hz.length)));
                out.push_back(Instruction::matmul(static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)));
            }
        }
    }
    return out;
}

std::vector<Instruction> CompiledModel::instructions() const {
    std::vector<Instruction> out;
    out.reserve(2 * steps.size());
    for (const auto& s : steps) {
        out.push_back(s.load());
        out.push_back(s.mul());
    }
    return out;
}

std::size_t CompiledModel::dropped_weights() const {
    std::size_t n = 0;
    for (const auto& p : packed) n += p.dropped;
    return n;
}

namespace {

std::vector<TileStep> schedule(const std::vector<PackedLayer>& packed, const std::vector<TilePlan>& plans,
                               const ModelManifest& m) {
    const auto dims = m.matmul_dims();
    std::vector<TileStep> steps;
    for (std::size_t l = 0; l < plans.size(); ++l) {
        const auto& plan = plans[l];
        for (const auto& v : plan.vertical) {
            for (std::size_t k = 0; k < plan.horizontal.size(); ++k) {
                const auto& hz = plan.horizontal[k];
                TileStep s;
                s.layer = l;
                s.row0 = v.offset;
                s.col0 = hz.offset;
                s.payload = packed[l].slice(v.offset, v.length, hz.offset, hz.length);
                s.input_h = dims[l].first;
                s.input_w = dims[l].second;
                s.accumulate = k > 0;
                s.completes = k + 1 == plan.horizontal.size();
                steps.push_back(std::move(s));
            }
        }
    }
    return steps;
}

}  // namespace

CompiledModel compile_model(const ModelManifest& m, const ArrayConfig& cfg) {
    check_array(cfg);
    validate_manifest(m);
    CompiledModel c;
    c.model = fold_model(m);
    c.array = cfg;
    for (const auto& layer : c.model.layers) c.packed.push_back(combine_columns(layer));
    c.packed.push_back(combine_columns(c.model.fc));
    for (const auto& p : c.packed) {
        if (p.group_size > cfg.max_group) {
            throw std::invalid_argument("column group " + std::to_string(p.group_size) +
                                        " exceeds the array's channel fan-in");
        }
        c.plans.push_back(plan_tiles(p, cfg));
    }
    c.steps = schedule(c.packed, c.plans, c.model);
    return c;
}

std::vector<std::uint8_t> serialize_stream(const CompiledModel& c) {
    std::vector<std::uint8_t> out;
    for (const auto& s : c.steps) {
        detail::put_le(out, encode_instruction(s.load()));
        append_packed(out, s.payload);
        detail::put_le(out, encode_instruction(s.mul()));
    }
    return out;
}

std::vector<StreamEntry> parse_stream(std::span<const std::uint8_t> bytes) {
    std::vector<StreamEntry> out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto where = [&] { return "instruction stream at byte " + std::to_string(pos); };
        detail::ByteReader head(bytes.subspan(pos), where());
        StreamEntry e;
        e.load = decode_instruction(head.get_le<std::uint64_t>());
        if (!e.load.is_load()) throw FormatError(where() + ": expected a load-weights word");
        pos += 8;
        auto [payload, used] = parse_packed_prefix(bytes.subspan(pos));
        if (payload.rows != e.load.tile_rows || payload.cols != e.load.tile_cols) {
            throw FormatError(where() + ": payload is " + std::to_string(payload.rows) + "x" +
                              std::to_string(payload.cols) + " but the load word says " +
                              std::to_string(e.load.tile_rows) + "x" + std::to_string(e.load.tile_cols));
        }
        e.payload = std::move(payload);
        pos += used;
        detail::ByteReader tail(bytes.subspan(pos), where());
        e.mul = decode_instruction(tail.get_le<std::uint64_t>());
        if (e.mul.is_load()) throw FormatError(where() + ": expected a matrix-multiply word");
        pos += 8;
        out.push_back(std::move(e));
    }
    return out;
}

CompiledModel bind_stream(const std::vector<StreamEntry>& stream, const ModelManifest& m) {
    validate_manifest(m);
    CompiledModel c;
    c.model = fold_model(m);
    c.array = {1, 1};
    const auto dims = c.model.matmul_dims();
    std::size_t next = 0;
    auto fail = [&](const std::string& msg) {
        throw FormatError("stream tile " + std::to_string(next) + ": " + msg);
    };
    for (std::size_t l = 0; l <= c.model.layers.size(); ++l) {
        const auto& layer = l < c.model.layers.size() ? c.model.layers[l] : c.model.fc;
        PackedLayer whole;
        whole.rows = layer.filters;
        whole.group_size = static_cast<unsigned>(layer.groups);
        whole.cols = layer.padded_channels() / whole.group_size;
        whole.cells.resize(whole.rows * whole.cols);
        whole.bias_fx.resize(whole.rows);
        TilePlan plan;
        for (std::size_t row0 = 0; row0 < whole.rows;) {
            std::size_t height = 0;
            for (std::size_t col0 = 0; col0 < whole.cols;) {
                if (next >= stream.size()) fail("stream ends before layer " + std::to_string(l) + " is covered");
                const auto& e = stream[next];
                const auto& p = e.payload;
                if (p.group_size != whole.group_size) fail("group size does not match the manifest");
                if (col0 == 0) height = p.rows;
                if (p.rows != height || p.rows == 0 || p.cols == 0 || row0 + p.rows > whole.rows ||
                    col0 + p.cols > whole.cols) {
                    fail("tile geometry does not fit layer " + std::to_string(l));
                }
                if (e.mul.input_h != dims[l].first || e.mul.input_w != dims[l].second) {
                    fail("matmul input " + std::to_string(e.mul.input_h) + "x" + std::to_string(e.mul.input_w) +
                         " does not match the manifest");
                }
                TileStep s;
                s.layer = l;
                s.row0 = row0;
                s.col0 = col0;
                s.payload = p;
                s.input_h = e.mul.input_h;
                s.input_w = e.mul.input_w;
                s.accumulate = col0 > 0;
                s.completes = col0 + p.cols == whole.cols;
                for (std::size_t r = 0; r < p.rows; ++r) {
                    for (std::size_t k = 0; k < p.cols; ++k) whole.cell(row0 + r, col0 + k) = p.cell(r, k);
                    if (col0 == 0) whole.bias_fx[row0 + r] = p.bias_fx[r];
                }
                if (row0 == 0) plan.horizontal.push_back({col0, p.cols});
                c.array.rows = std::max(c.array.rows, p.rows);
                c.array.cols = std::max(c.array.cols, p.cols);
                col0 += p.cols;
                c.steps.push_back(std::move(s));
                ++next;
            }
            plan.vertical.push_back({row0, height});
            row0 += height;
        }
        c.plans.push_back(std::move(plan));
        c.packed.push_back(std::move(whole));
    }
    if (next != stream.size()) fail("trailing tiles after the last layer");
    return c;
}

}  // namespace sac
