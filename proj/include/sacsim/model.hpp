#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sacsim/tensor.hpp"
#include "sacsim/weight.hpp"

namespace sac {

/// Inference-time batch-norm statistics for one output channel. gamma is fixed to 1.
struct BnParams {
    double mu = 0.0;
    double sigma = 1.0;
    double beta = 0.0;
    friend bool operator==(const BnParams&, const BnParams&) = default;
};

/// Batch norm after log quantization: y = 2^scale_exp * x + bias, with the bias
/// in accumulator units (multiples of 2^(lsb_exp - 6)).
struct FoldedAffine {
    int scale_exp = 0;
    std::int32_t bias_fx = 0;
    friend constexpr bool operator==(const FoldedAffine&, const FoldedAffine&) = default;
};

/// Dense filters x channels matrix of power-of-two weights.
class WeightMatrix {
public:
    WeightMatrix() = default;
    WeightMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), w_(rows * cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    PowTwoWeight at(std::size_t r, std::size_t c) const { return w_[r * cols_ + c]; }
    PowTwoWeight& at(std::size_t r, std::size_t c) { return w_[r * cols_ + c]; }
    std::size_t nonzeros() const;

    friend bool operator==(const WeightMatrix&, const WeightMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<PowTwoWeight> w_;
};

using BnSpec = std::variant<std::vector<BnParams>, std::vector<FoldedAffine>>;

/// One streamlined layer: optional channel shift, strided 1x1 convolution with
/// power-of-two weights, batch norm, ReLU + 8-bit quantization.
struct LayerSpec {
    std::size_t filters = 0;
    std::size_t channels = 0;
    int stride = 1;
    int groups = 1;  ///< column-combining group size g
    WeightMatrix weights;
    BnSpec bn = std::vector<FoldedAffine>{};  ///< one entry per filter
    bool has_shift = false;
    std::vector<ShiftOffset> shift_dirs;  ///< one per channel when has_shift

    bool bn_is_quantized() const { return std::holds_alternative<std::vector<FoldedAffine>>(bn); }
    const std::vector<FoldedAffine>& folded_bn() const;
    /// Channels after padding to a multiple of the group size.
    std::size_t padded_channels() const;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered layer list plus the final fully connected layer. `fc` has no shift,
/// no batch norm and is applied at every spatial position of the last feature map.
struct ModelManifest {
    Shape3 input_shape;
    int reshape_factor = 1;
    double clock_mhz = 170.0;
    int lsb_exp = 0;
    std::vector<LayerSpec> layers;
    LayerSpec fc;

    /// Input shape after space-to-depth reshaping.
    Shape3 reshaped_shape() const;
    /// Spatial dims of each layer's matmul input (after its stride); index layers.size() is the fc.
    std::vector<std::pair<std::size_t, std::size_t>> matmul_dims() const;

    friend bool operator==(const ModelManifest&, const ModelManifest&) = default;
};

/// Throws ManifestError naming the offending layer and field.
void validate_manifest(const ModelManifest& m);
void validate_layer(const LayerSpec& layer, const std::string& where, bool is_fc);

FoldedAffine quantize_bn(const BnParams& bn, int lsb_exp);

/// Converts real-valued batch norm to FoldedAffine; already-quantized layers pass through.
LayerSpec quantize_layer_bn(const LayerSpec& layer, int lsb_exp);

/// Adds each filter's BN scale exponent to its weights, leaving scale_exp = 0 and the
/// bias untouched. Requires quantized BN; throws RangeError when an exponent leaves [-6, 0].
LayerSpec fold_bn_into_weights(const LayerSpec& layer);

/// Multiplies an accumulator value by 2^scale_exp; throws RangeError if the result is not an integer.
std::int64_t apply_pow2_scale(std::int64_t acc, int scale_exp);

/// Quantizes and folds every layer's batch norm. The result has scale_exp == 0 everywhere.
ModelManifest fold_model(const ModelManifest& m);

}  // namespace sac
