#include "sacsim/sim.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sacsim/error.hpp"

namespace sac {

Fidelity parse_fidelity(const std::string& s) {
    if (s == "bit") return Fidelity::BitSerial;
    if (s == "word") return Fidelity::Word;
    throw std::invalid_argument("fidelity must be 'bit' or 'word', got '" + s + "'");
}

const char* to_string(Fidelity f) { return f == Fidelity::BitSerial ? "bit" : "word"; }

void RegisterChain::push(std::span<const std::uint8_t> bits) {
    if (bits.size() != history_.size()) throw ShapeError("register chain: one bit per channel required");
    for (unsigned ch = 0; ch < history_.size(); ++ch) push_channel(ch, bits[ch]);
}

std::int64_t chain_tap(std::uint8_t input, unsigned offset) {
    if (offset >= kTapCount) throw std::out_of_range("tap offset " + std::to_string(offset) + " outside [0, 6]");
    RegisterChain chain(1);
    std::int64_t out = 0;
    for (unsigned t = 0; t < kDataBits + offset; ++t) {
        chain.push_channel(0, t < kDataBits ? (input >> t) & 1u : 0u);
        out |= static_cast<std::int64_t>(chain.tap(0, offset)) << t;
    }
    return out;
}

SacCell SacCell::from_code(CellCode code) {
    SacCell c;
    c.code = code;
    const auto [index, w] = decode_cell(code);
    if (w.is_zero()) return c;
    c.enabled = true;
    c.channel = index;
    c.offset = static_cast<unsigned>(w.exponent() - kMinExponent);
    c.negative = w.sign() < 0;
    return c;
}

std::uint64_t matmul_cycles(std::size_t vectors, std::size_t tile_rows, std::size_t tile_cols) {
    return vectors + tile_rows + tile_cols + kDataBits - 2;
}

std::uint64_t load_cycles(std::size_t tile_rows) { return tile_rows; }

SacArray::SacArray(ArrayConfig cfg, SimOptions opts)
    : cfg_(cfg), opts_(opts), cells_(cfg.rows * cfg.cols), bias_(cfg.rows, 0) {
    if (cfg.rows == 0 || cfg.cols == 0) throw std::invalid_argument("array dimensions must be >= 1");
}

void SacArray::load_weights(const PackedLayer& tile) {
    if (tile.rows > cfg_.rows || tile.cols > cfg_.cols) {
        throw ShapeError("tile " + std::to_string(tile.rows) + "x" + std::to_string(tile.cols) +
                         " does not fit a " + cfg_.to_string() + " array");
    }
    if (tile.cells.size() != tile.rows * tile.cols || tile.bias_fx.size() != tile.rows) {
        throw ShapeError("tile payload size does not match its " + std::to_string(tile.rows) + "x" +
                         std::to_string(tile.cols) + " geometry");
    }
    if (tile.group_size > cfg_.max_group) throw ShapeError("tile group size exceeds the array fan-in");
    std::fill(cells_.begin(), cells_.end(), SacCell{});
    std::fill(bias_.begin(), bias_.end(), 0);
    for (std::size_t r = 0; r < tile.rows; ++r) {
        for (std::size_t c = 0; c < tile.cols; ++c) cell(r, c) = SacCell::from_code(tile.cell(r, c));
        bias_[r] = tile.bias_fx[r];
    }
    group_ = tile.group_size;
    tile_rows_ = tile.rows;
    tile_cols_ = tile.cols;
    counters_.cycles += load_cycles(tile.rows);
}

std::vector<AccumWord> SacArray::run_matmul(const QuantTensor& input,
                                            std::optional<std::span<const AccumWord>> partial) {
    const auto& s = input.shape();
    if (s.channels != tile_cols_ * group_) {
        throw ShapeError("matmul input has " + std::to_string(s.channels) + " channels, tile spans " +
                         std::to_string(tile_cols_ * group_));
    }
    const std::size_t n = s.plane();
    std::vector<AccumWord> acc(tile_rows_ * n);
    if (partial) {
        if (partial->size() != acc.size()) throw ShapeError("partial sums do not match the tile output");
        std::copy(partial->begin(), partial->end(), acc.begin());
    } else {
        for (std::size_t r = 0; r < tile_rows_; ++r) std::fill_n(acc.begin() + r * n, n, bias_[r]);
    }

    last_ = {};
    last_.cycles = matmul_cycles(n, tile_rows_, tile_cols_);
    last_.cell_cycles_total = static_cast<std::uint64_t>(tile_rows_) * tile_cols_ * n;
    if (opts_.fidelity == Fidelity::BitSerial) {
        matmul_bits(input, acc);
    } else {
        matmul_word(input, acc);
    }
    counters_ += last_;
    return acc;
}

namespace {

[[noreturn]] void overflow(std::size_t r, std::size_t col, std::size_t pos) {
    throw RangeError("accumulator overflow at row " + std::to_string(r) + ", column " + std::to_string(col) +
                     ", position " + std::to_string(pos));
}

}  // namespace

void SacArray::matmul_word(const QuantTensor& input, std::vector<AccumWord>& acc) {
    const std::size_t n = input.shape().plane();
    const auto data = input.values();
    std::uint64_t active = 0;
    for (std::size_t r = 0; r < tile_rows_; ++r) {
        for (std::size_t c = 0; c < tile_cols_; ++c) {
            const SacCell& sc = cells_[r * cfg_.cols + c];
            if (!sc.enabled) {
                // Zero weight: disabled (or adding zero) for the whole matmul.
                if (!opts_.zero_skip) active += n;
                continue;
            }
            const auto* x = data.data() + (c * group_ + sc.channel) * n;
            AccumWord* out = acc.data() + r * n;
            for (std::size_t p = 0; p < n; ++p) {
                if (x[p] == 0) {
                    if (!opts_.zero_skip) ++active;
                    continue;
                }
                ++active;
                const std::int64_t term = static_cast<std::int64_t>(x[p]) << sc.offset;
                const std::int64_t v = sc.negative ? std::int64_t{out[p]} - term : std::int64_t{out[p]} + term;
                if (!fits_accum(v)) overflow(r, c, p);
                out[p] = static_cast<AccumWord>(v);
            }
        }
    }
    last_.cell_cycles_active = active;
}

void SacArray::matmul_bits(const QuantTensor& input, std::vector<AccumWord>& acc) {
    const std::size_t n = input.shape().plane();
    const std::size_t rows = tile_rows_;
    const std::size_t cols = tile_cols_;
    std::vector<RegisterChain> chains(cols, RegisterChain(group_));
    std::vector<std::uint8_t> words(cols * group_);
    std::vector<std::uint8_t> clocked(rows * cols);
    std::vector<std::uint32_t> y_in(rows), y_out(rows);
    std::uint64_t active = 0;

    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t ch = 0; ch < cols * group_; ++ch) words[ch] = input.values()[ch * n + p];
        for (auto& chain : chains) chain.reset();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                SacCell& sc = cell(r, c);
                // The zero signal gates the cell when its weight or selected datum is zero.
                const bool zero = !sc.enabled || words[c * group_ + sc.channel] == 0;
                const bool on = !opts_.zero_skip || !zero;
                clocked[r * cols + c] = on ? 1 : 0;
                active += on ? 1 : 0;
                sc.begin_word();
            }
            y_in[r] = static_cast<std::uint32_t>(acc[r * n + p]);
            y_out[r] = 0;
        }

        for (unsigned t = 0; t < kAccumBits; ++t) {
            for (std::size_t c = 0; c < cols; ++c) {
                for (unsigned ch = 0; ch < group_; ++ch) {
                    chains[c].push_channel(ch, t < kDataBits ? (words[c * group_ + ch] >> t) & 1u : 0u);
                }
            }
            for (std::size_t r = 0; r < rows; ++r) {
                unsigned y = (y_in[r] >> t) & 1u;
                for (std::size_t c = 0; c < cols; ++c) {
                    if (!clocked[r * cols + c]) continue;  // bypass: Y forwarded unchanged
                    SacCell& sc = cell(r, c);
                    const unsigned x = sc.enabled ? chains[c].tap(sc.channel, sc.offset) : 0u;
                    const unsigned carry_in = sc.carry;
                    y = sc.add_bit(y, x);
                    // Signed overflow: carry into the sign bit differs from the carry out.
                    if (t == kAccumBits - 1 && carry_in != sc.carry) overflow(r, c, p);
                }
                y_out[r] |= static_cast<std::uint32_t>(y) << t;
            }
        }
        for (std::size_t r = 0; r < rows; ++r) acc[r * n + p] = static_cast<AccumWord>(y_out[r]);
    }
    last_.cell_cycles_active = active;
}

std::vector<AccumWord> output_accumulate(std::span<const AccumWord> fc_outputs, std::size_t rows,
                                         std::size_t positions) {
    if (fc_outputs.size() != rows * positions) throw ShapeError("output accumulator: size mismatch");
    std::vector<AccumWord> logits(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        std::int64_t sum = 0;
        for (std::size_t p = 0; p < positions; ++p) {
            sum += fc_outputs[r * positions + p];
            if (!fits_accum(sum)) {
                throw RangeError("output accumulator overflow for class " + std::to_string(r) + " at position " +
                                 std::to_string(p));
            }
        }
        logits[r] = static_cast<AccumWord>(sum);
    }
    return logits;
}

std::size_t SimReport::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

std::string SimReport::to_json() const {
    nlohmann::ordered_json j;
    j["logits"] = logits;
    j["argmax"] = argmax();
    j["logit_scale"] = positions;
    j["cycles"] = cycles;
    j["cell_cycles_active"] = cell_cycles_active;
    j["cell_cycles_total"] = cell_cycles_total;
    j["energy_proxy"] = energy_proxy();
    j["latency_ms"] = latency_ms();
    j["clock_mhz"] = clock_mhz;
    j["array"] = array;
    j["fidelity"] = to_string(fidelity);
    j["zero_skip"] = zero_skip;
    return j.dump(2) + "\n";
}

std::string SimReport::to_table() const {
    std::ostringstream os;
    os << "array          " << array << " @ " << clock_mhz << " MHz (" << to_string(fidelity)
       << (zero_skip ? ", zero-skip" : "") << ")\n";
    os << "cycles         " << cycles << "\n";
    os << "latency        " << std::fixed << std::setprecision(4) << latency_ms() << " ms\n";
    os << "active cells   " << cell_cycles_active << " / " << cell_cycles_total << " (" << std::setprecision(3)
       << 100.0 * energy_proxy() << "%)\n";
    os << "prediction     class " << argmax() << "\n";
    os << "logits (x" << positions << ")\n";
    for (std::size_t i = 0; i < logits.size(); ++i) os << "  " << std::setw(5) << i << "  " << logits[i] << "\n";
    return os.str();
}

namespace {

QuantTensor pad_channels(const QuantTensor& x, std::size_t channels) {
    if (x.shape().channels == channels) return x;
    QuantTensor out({channels, x.shape().height, x.shape().width}, x.lsb_exp());
    std::copy(x.values().begin(), x.values().end(), out.values().begin());
    return out;
}

QuantTensor channel_slice(const QuantTensor& x, std::size_t first, std::size_t count) {
    const std::size_t plane = x.shape().plane();
    auto src = x.values().subspan(first * plane, count * plane);
    return QuantTensor({count, x.shape().height, x.shape().width}, std::vector<std::uint8_t>(src.begin(), src.end()),
                       x.lsb_exp());
}

}  // namespace

SimReport run_model(const CompiledModel& model, const QuantTensor& image, const SimOptions& opts, SimTrace* trace) {
    const auto& m = model.model;
    if (image.shape() != m.input_shape) {
        throw ShapeError("image " + to_string(image.shape()) + " does not match input_shape " +
                         to_string(m.input_shape));
    }
    QuantTensor x = reshape_input(image, m.reshape_factor);
    SacArray array(model.array, opts);
    SimReport report;
    report.clock_mhz = m.clock_mhz;
    report.array = model.array.to_string();
    report.fidelity = opts.fidelity;
    report.zero_skip = opts.zero_skip;

    std::size_t next = 0;
    const std::size_t layer_count = m.layers.size();
    for (std::size_t l = 0; l <= layer_count; ++l) {
        const bool is_fc = l == layer_count;
        const LayerSpec& layer = is_fc ? m.fc : m.layers[l];
        if (!is_fc) {
            if (layer.has_shift) x = channel_shift(x, layer.shift_dirs);
            x = subsample(x, layer.stride);
        }
        const std::size_t n = x.shape().plane();
        const QuantTensor padded = pad_channels(x, layer.padded_channels());
        const std::size_t g = static_cast<std::size_t>(layer.groups);
        std::vector<AccumWord> acc(layer.filters * n, 0);

        for (; next < model.steps.size() && model.steps[next].layer == l; ++next) {
            const TileStep& s = model.steps[next];
            if (s.input_h != x.shape().height || s.input_w != x.shape().width) {
                throw ShapeError("layer " + std::to_string(l) + " matmul expects " + std::to_string(s.input_h) + "x" +
                                 std::to_string(s.input_w) + " input, data is " + to_string(x.shape()));
            }
            array.load_weights(s.payload);
            const auto slice = channel_slice(padded, s.col0 * g, s.payload.cols * g);
            auto rows = std::span<AccumWord>(acc).subspan(s.row0 * n, s.payload.rows * n);
            std::vector<AccumWord> out;
            if (s.accumulate) {
                out = array.run_matmul(slice, std::span<const AccumWord>(rows));
            } else {
                out = array.run_matmul(slice);
            }
            std::copy(out.begin(), out.end(), rows.begin());
        }

        if (is_fc) {
            report.logits = output_accumulate(acc, layer.filters, n);
            report.positions = n;
            if (trace) trace->fc_outputs = acc;
        } else {
            QuantTensor y({layer.filters, x.shape().height, x.shape().width}, x.lsb_exp());
            auto yv = y.values();
            for (std::size_t i = 0; i < acc.size(); ++i) yv[i] = relu_quantize(acc[i]);
            x = std::move(y);
            if (trace) trace->activations.push_back(x);
        }
    }
    if (next != model.steps.size()) throw ShapeError("schedule has tiles for layers beyond the model");

    const auto& c = array.counters();
    report.cycles = c.cycles;
    report.cell_cycles_total = c.cell_cycles_total;
    report.cell_cycles_active = c.cell_cycles_active;
    return report;
}

SimReport run_model(const ModelManifest& m, const QuantTensor& image, const ArrayConfig& cfg, const SimOptions& opts,
                    SimTrace* trace) {
    return run_model(compile_model(m, cfg), image, opts, trace);
}

}  // namespace sac
