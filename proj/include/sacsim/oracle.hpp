#pragma once

// Reference implementations used as ground truth. Nothing here touches the simulator's
// matmul machinery; only the scalar fixed-point rules are shared.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sacsim/model.hpp"
#include "sacsim/packer.hpp"
#include "sacsim/tensor.hpp"

namespace sac::oracle {

/// filters x positions matrix of 64-bit accumulator-unit values.
struct RefTensor {
    std::size_t rows = 0;
    std::size_t positions = 0;
    std::vector<std::int64_t> values;

    std::int64_t at(std::size_t r, std::size_t p) const { return values[r * positions + p]; }
    std::int64_t& at(std::size_t r, std::size_t p) { return values[r * positions + p]; }
};

/// sum_c sign * (x[c] << (exp + 6)) per filter and position; no bias.
RefTensor ref_matmul(const WeightMatrix& w, const QuantTensor& input);
/// Same, reading each cell's routing index to find its input channel.
RefTensor ref_matmul(const PackedLayer& packed, const QuantTensor& input);

/// Per row and aligned channel group, zero everything but the largest-magnitude weight
/// (first one on ties), by direct scan.
WeightMatrix prune_groups(const WeightMatrix& w, int groups);

struct RefResult {
    std::vector<std::int64_t> logits;
    std::vector<QuantTensor> activations;
    RefTensor fc_outputs;
};

/// Whole-model forward pass with unfolded batch norm: matmul, exact 2^scale_exp scaling,
/// bias, ReLU/quantize; fc summed over positions.
RefResult ref_forward(const ModelManifest& m, const QuantTensor& image);

/// Layer shape for the synthetic generator.
struct LayerShape {
    std::size_t filters = 0;
    int stride = 1;
    int groups = 1;
};

struct Topology {
    Shape3 input_shape{3, 8, 8};
    int reshape_factor = 1;
    double clock_mhz = 170.0;
    std::vector<LayerShape> layers;
    std::size_t classes = 10;
    int fc_groups = 1;
    /// Probability that a (row, group) keeps a weight; the rest are empty groups.
    double density = 15.0 / 16.0;
};

/// Deterministic sparse power-of-two model: at most one weight per (row, group), folded
/// batch norm with scale 2^0 or 2^-1 and weights chosen so folding stays in range.
/// Byte-identical dump_manifest output for equal seeds on every platform.
ModelManifest gen_synthetic(std::uint64_t seed, const Topology& topo);

/// Random topology: 1..max_layers layers, channels <= max_channels, small spatial input.
Topology random_topology(std::uint64_t seed, std::size_t max_layers, std::size_t max_channels);

/// 19 conv layers plus a 1000-class fc on a 3x224x224 image reshaped (r = 4) to 48x56x56.
Topology imagenet_small56();

/// Uniform random image; with zero_fraction > 0 that share of pixels is forced to zero.
QuantTensor gen_image(std::uint64_t seed, const Shape3& shape, double zero_fraction = 0.0);

/// Small portable PRNG (splitmix64) so generated data is identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    /// Uniform integer in [lo, hi].
    std::int64_t uniform(std::int64_t lo, std::int64_t hi);
    /// Uniform real in [0, 1).
    double real();

private:
    std::uint64_t state_;
};

}  // namespace sac::oracle
