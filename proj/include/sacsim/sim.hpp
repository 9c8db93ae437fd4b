#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sacsim/fixed_point.hpp"
#include "sacsim/packer.hpp"
#include "sacsim/scheduler.hpp"
#include "sacsim/tensor.hpp"

namespace sac {

enum class Fidelity { BitSerial, Word };

Fidelity parse_fidelity(const std::string& s);  // "bit" | "word"
const char* to_string(Fidelity f);

struct SimOptions {
    Fidelity fidelity = Fidelity::Word;
    bool zero_skip = true;
};

/// Bits streamed per accumulator word; the data word itself is 8 bits.
inline constexpr unsigned kAccumBits = 32;
inline constexpr unsigned kDataBits = 8;
/// Tap positions on a register chain, one per representable exponent (-6..0).
inline constexpr unsigned kTapCount = kMaxExponent - kMinExponent + 1;

/// Per-column shift registers, one pipeline per combined channel. Bits enter LSB first;
/// tap k returns the bit pushed k steps earlier, so reading tap k over time yields the
/// input word multiplied by 2^k.
class RegisterChain {
public:
    explicit RegisterChain(unsigned channels = kMaxGroup) : history_(channels, 0) {}

    void reset() { std::fill(history_.begin(), history_.end(), 0); }
    /// Shifts every channel's pipeline by one and inserts bit `bits[ch]`.
    void push(std::span<const std::uint8_t> bits);
    void push_channel(unsigned ch, unsigned bit) {
        history_[ch] = static_cast<std::uint8_t>((history_[ch] << 1) | (bit & 1u));
    }
    unsigned tap(unsigned channel, unsigned offset) const { return (history_[channel] >> offset) & 1u; }
    unsigned channels() const { return static_cast<unsigned>(history_.size()); }

private:
    // Bit k of history_[ch] is the bit pushed k steps ago; 8 bits cover taps 0..6.
    std::vector<std::uint8_t> history_;
};

/// Streams `input` through a one-channel chain and reads tap `offset` bit-serially.
std::int64_t chain_tap(std::uint8_t input, unsigned offset);

/// Configuration of one selector-accumulator cell, decoded from its CellCode.
struct SacCell {
    CellCode code;
    bool enabled = false;  ///< false for zero weights: bypassed for the whole matmul
    unsigned channel = 0;  ///< selected chain within the column
    unsigned offset = 0;   ///< tap position = exponent + 6
    bool negative = false;
    unsigned carry = 0;    ///< bit-serial adder state

    static SacCell from_code(CellCode code);
    /// Starts a new accumulator word: the carry is preset to 1 for subtraction.
    void begin_word() { carry = negative ? 1u : 0u; }
    /// One full-adder step: y_in + (x or ~x) + carry.
    unsigned add_bit(unsigned y_in, unsigned x_bit) {
        const unsigned x = negative ? (x_bit ^ 1u) : x_bit;
        const unsigned sum = y_in ^ x ^ carry;
        carry = (y_in & x) | (y_in & carry) | (x & carry);
        return sum;
    }
};

struct ActivityCounters {
    std::uint64_t cycles = 0;
    std::uint64_t cell_cycles_total = 0;
    std::uint64_t cell_cycles_active = 0;

    ActivityCounters& operator+=(const ActivityCounters& o) {
        cycles += o.cycles;
        cell_cycles_total += o.cell_cycles_total;
        cell_cycles_active += o.cell_cycles_active;
        return *this;
    }
};

/// Software model of the SAC systolic array with its bias unit.
///
/// run_matmul takes the tile's input channels (packed columns x group size, zero-padded)
/// as a tensor and returns rows x positions accumulator words, row-major. The bit-serial
/// and word-level fidelities produce identical words; zero-skipping changes only the
/// activity counters.
class SacArray {
public:
    SacArray(ArrayConfig cfg, SimOptions opts);

    /// Throws ShapeError when the tile exceeds the array or its bias count mismatches.
    void load_weights(const PackedLayer& tile);
    CellCode cell_config(std::size_t r, std::size_t c) const { return cells_[r * cfg_.cols + c].code; }
    std::int32_t bias(std::size_t r) const { return bias_[r]; }
    std::size_t tile_rows() const { return tile_rows_; }
    std::size_t tile_cols() const { return tile_cols_; }

    /// Without `partial` each row starts from its bias; with it, from the given partial
    /// sums (horizontal tiles). Throws RangeError on 32-bit accumulator overflow.
    std::vector<AccumWord> run_matmul(const QuantTensor& input,
                                      std::optional<std::span<const AccumWord>> partial = std::nullopt);

    /// Counters accumulated since construction or the last reset.
    const ActivityCounters& counters() const { return counters_; }
    /// Counters of the most recent run_matmul only.
    const ActivityCounters& last_matmul() const { return last_; }
    void reset_counters() { counters_ = last_ = {}; }

    const ArrayConfig& config() const { return cfg_; }
    const SimOptions& options() const { return opts_; }

private:
    SacCell& cell(std::size_t r, std::size_t c) { return cells_[r * cfg_.cols + c]; }
    void matmul_word(const QuantTensor& input, std::vector<AccumWord>& acc);
    void matmul_bits(const QuantTensor& input, std::vector<AccumWord>& acc);

    ArrayConfig cfg_;
    SimOptions opts_;
    std::vector<SacCell> cells_;
    std::vector<std::int32_t> bias_;
    unsigned group_ = 1;
    std::size_t tile_rows_ = 0;
    std::size_t tile_cols_ = 0;
    ActivityCounters counters_;
    ActivityCounters last_;
};

/// Matmul cycle cost: pipeline fill and drain with skewed inputs and outputs.
std::uint64_t matmul_cycles(std::size_t vectors, std::size_t tile_rows, std::size_t tile_cols);
/// Load-weights cycle cost: one row of cell configurations per cycle.
std::uint64_t load_cycles(std::size_t tile_rows);

/// Sums per-position fully-connected outputs (rows x positions, row-major) into one
/// logit per row. The 1/R of average pooling is omitted: it does not change the argmax.
/// Throws RangeError on 32-bit overflow.
std::vector<AccumWord> output_accumulate(std::span<const AccumWord> fc_outputs, std::size_t rows,
                                         std::size_t positions);

struct SimReport {
    std::vector<AccumWord> logits;
    std::size_t positions = 0;  ///< R: logits are R times the pooled-average logits
    std::uint64_t cycles = 0;
    std::uint64_t cell_cycles_total = 0;
    std::uint64_t cell_cycles_active = 0;
    double clock_mhz = 0.0;
    std::string array;
    Fidelity fidelity = Fidelity::Word;
    bool zero_skip = true;

    double energy_proxy() const {
        return cell_cycles_total == 0 ? 0.0
                                      : static_cast<double>(cell_cycles_active) /
                                            static_cast<double>(cell_cycles_total);
    }
    double latency_ms() const { return static_cast<double>(cycles) / (clock_mhz * 1e3); }
    std::size_t argmax() const;

    std::string to_json() const;
    std::string to_table() const;
};

/// Intermediate values of one forward pass, for layer-by-layer comparison.
struct SimTrace {
    std::vector<QuantTensor> activations;  ///< output of every conv layer
    std::vector<AccumWord> fc_outputs;     ///< classes x positions before accumulation
};

/// Runs reshape, every layer's tiles through the array and the output accumulator.
SimReport run_model(const CompiledModel& model, const QuantTensor& image, const SimOptions& opts,
                    SimTrace* trace = nullptr);

/// Convenience: compile for `cfg` and run.
SimReport run_model(const ModelManifest& m, const QuantTensor& image, const ArrayConfig& cfg,
                    const SimOptions& opts, SimTrace* trace = nullptr);

}  // namespace sac
