#include "sacsim/model.hpp"

#include <cmath>
#include <limits>

#include "sacsim/error.hpp"

namespace sac {

std::size_t WeightMatrix::nonzeros() const {
    std::size_t n = 0;
    for (const auto& w : w_) n += w.is_zero() ? 0 : 1;
    return n;
}

const std::vector<FoldedAffine>& LayerSpec::folded_bn() const {
    if (const auto* f = std::get_if<std::vector<FoldedAffine>>(&bn)) return *f;
    throw std::logic_error("layer batch norm is not quantized");
}

std::size_t LayerSpec::padded_channels() const {
    const auto g = static_cast<std::size_t>(groups);
    return (channels + g - 1) / g * g;
}

Shape3 ModelManifest::reshaped_shape() const {
    const auto r = static_cast<std::size_t>(reshape_factor);
    return {input_shape.channels * r * r, input_shape.height / r, input_shape.width / r};
}

std::vector<std::pair<std::size_t, std::size_t>> ModelManifest::matmul_dims() const {
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    auto s = reshaped_shape();
    std::size_t h = s.height, w = s.width;
    for (const auto& layer : layers) {
        const auto st = static_cast<std::size_t>(layer.stride);
        h = (h + st - 1) / st;
        w = (w + st - 1) / st;
        dims.emplace_back(h, w);
    }
    dims.emplace_back(h, w);
    return dims;
}

void validate_layer(const LayerSpec& layer, const std::string& where, bool is_fc) {
    auto fail = [&](const std::string& field, const std::string& msg) {
        throw ManifestError(where + "." + field + ": " + msg);
    };
    if (layer.filters == 0) fail("f", "must be positive");
    if (layer.channels == 0) fail("c", "must be positive");
    if (layer.stride != 1 && layer.stride != 2) fail("s", "must be 1 or 2");
    if (is_fc && layer.stride != 1) fail("s", "fully connected layer must have stride 1");
    if (layer.groups != 1 && layer.groups != 2 && layer.groups != 4 && layer.groups != 8) {
        fail("g", "must be one of 1, 2, 4, 8");
    }
    if (layer.weights.rows() != layer.filters || layer.weights.cols() != layer.channels) {
        fail("weights", "matrix is " + std::to_string(layer.weights.rows()) + "x" +
                            std::to_string(layer.weights.cols()) + ", expected " +
                            std::to_string(layer.filters) + "x" + std::to_string(layer.channels));
    }
    std::visit(
        [&](const auto& v) {
            if (v.size() != layer.filters) {
                fail("bn", "has " + std::to_string(v.size()) + " entries for " +
                               std::to_string(layer.filters) + " filters");
            }
        },
        layer.bn);
    if (const auto* raw = std::get_if<std::vector<BnParams>>(&layer.bn)) {
        for (const auto& p : *raw) {
            if (!std::isfinite(p.mu) || !std::isfinite(p.beta) || !std::isfinite(p.sigma)) {
                fail("bn", "parameters must be finite");
            }
            if (!(p.sigma > 0.0)) fail("bn.sigma", "bn.sigma must be > 0");
        }
        if (is_fc) fail("bn", "fully connected layer has no batch norm");
    } else if (is_fc) {
        for (const auto& a : layer.folded_bn()) {
            if (a.scale_exp != 0 || a.bias_fx != 0) fail("bn", "fully connected layer has no batch norm");
        }
    }
    if (layer.has_shift) {
        if (is_fc) fail("shift_dirs", "fully connected layer has no shift");
        if (layer.shift_dirs.size() != layer.channels) {
            fail("shift_dirs", std::to_string(layer.shift_dirs.size()) + " entries for " +
                                   std::to_string(layer.channels) + " channels");
        }
        for (const auto& d : layer.shift_dirs) {
            if (d.dy < -1 || d.dy > 1 || d.dx < -1 || d.dx > 1) {
                fail("shift_dirs", "offsets must lie in {-1, 0, 1}");
            }
        }
    } else if (!layer.shift_dirs.empty()) {
        fail("shift_dirs", "given for a layer without a shift");
    }
}

void validate_manifest(const ModelManifest& m) {
    const auto& in = m.input_shape;
    if (in.channels == 0 || in.height == 0 || in.width == 0) {
        throw ManifestError("input_shape: all dimensions must be positive");
    }
    if (m.reshape_factor != 1 && m.reshape_factor != 2 && m.reshape_factor != 4) {
        throw ManifestError("reshape_factor: must be 1, 2 or 4");
    }
    const auto r = static_cast<std::size_t>(m.reshape_factor);
    if (in.height % r != 0 || in.width % r != 0) {
        throw ManifestError("reshape_factor: input " + to_string(in) + " not divisible by " +
                            std::to_string(r));
    }
    if (!(m.clock_mhz > 0.0) || !std::isfinite(m.clock_mhz)) {
        throw ManifestError("clock_mhz: must be a positive number");
    }
    if (m.layers.empty()) throw ManifestError("layers: at least one layer is required");

    std::size_t expected_c = m.reshaped_shape().channels;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const auto where = "layers[" + std::to_string(i) + "]";
        const auto& layer = m.layers[i];
        validate_layer(layer, where, false);
        if (i == 0 && layer.has_shift) throw ManifestError(where + ".shift_dirs: first layer has no shift");
        if (layer.channels != expected_c) {
            throw ManifestError(where + ".c: expected " + std::to_string(expected_c) +
                                " channels from the preceding stage, got " +
                                std::to_string(layer.channels));
        }
        expected_c = layer.filters;
    }
    validate_layer(m.fc, "fc", true);
    if (m.fc.channels != expected_c) {
        throw ManifestError("fc.c: expected " + std::to_string(expected_c) + " channels, got " +
                            std::to_string(m.fc.channels));
    }
}

FoldedAffine quantize_bn(const BnParams& bn, int lsb_exp) {
    if (!(bn.sigma > 0.0)) throw RangeError("bn.sigma must be > 0");
    FoldedAffine out;
    out.scale_exp = nearest_log2(1.0 / bn.sigma);
    const double bias = bn.beta - bn.mu / bn.sigma;
    const double fx = std::round(std::ldexp(bias, kAccFracBits - lsb_exp));
    if (!(fx >= std::numeric_limits<std::int32_t>::min() &&
          fx <= std::numeric_limits<std::int32_t>::max())) {
        throw RangeError("bn bias " + std::to_string(bias) +
                         " overflows the 32-bit accumulator at lsb_exp " + std::to_string(lsb_exp));
    }
    out.bias_fx = static_cast<std::int32_t>(fx);
    return out;
}

LayerSpec quantize_layer_bn(const LayerSpec& layer, int lsb_exp) {
    const auto* raw = std::get_if<std::vector<BnParams>>(&layer.bn);
    if (raw == nullptr) return layer;
    std::vector<FoldedAffine> folded;
    folded.reserve(raw->size());
    for (const auto& p : *raw) folded.push_back(quantize_bn(p, lsb_exp));
    LayerSpec out = layer;
    out.bn = std::move(folded);
    return out;
}

LayerSpec fold_bn_into_weights(const LayerSpec& layer) {
    if (!layer.bn_is_quantized()) {
        throw std::invalid_argument("fold_bn_into_weights requires quantized batch norm");
    }
    LayerSpec out = layer;
    auto bn = layer.folded_bn();
    for (std::size_t r = 0; r < layer.filters; ++r) {
        const int scale = bn[r].scale_exp;
        for (std::size_t c = 0; c < layer.channels; ++c) {
            const auto w = layer.weights.at(r, c);
            if (w.is_zero()) continue;
            const int e = w.exponent() + scale;
            if (e < kMinExponent || e > kMaxExponent) {
                throw RangeError("folding scale 2^" + std::to_string(scale) + " into weight " +
                                 w.to_string() + " at (" + std::to_string(r) + ", " +
                                 std::to_string(c) + ") gives exponent " + std::to_string(e) +
                                 " outside [-6, 0]");
            }
            out.weights.at(r, c) = PowTwoWeight::value(w.sign(), e);
        }
        bn[r].scale_exp = 0;
    }
    out.bn = std::move(bn);
    return out;
}

std::int64_t apply_pow2_scale(std::int64_t acc, int scale_exp) {
    if (scale_exp >= 0) {
        if (scale_exp > 30) throw RangeError("scale exponent too large");
        return acc * (std::int64_t{1} << scale_exp);
    }
    if (scale_exp < -62) throw RangeError("scale exponent too small");
    const std::int64_t div = std::int64_t{1} << -scale_exp;
    if (acc % div != 0) {
        throw RangeError("scaling " + std::to_string(acc) + " by 2^" + std::to_string(scale_exp) +
                         " is not exact");
    }
    return acc / div;
}

ModelManifest fold_model(const ModelManifest& m) {
    ModelManifest out = m;
    for (auto& layer : out.layers) layer = fold_bn_into_weights(quantize_layer_bn(layer, m.lsb_exp));
    out.fc = fold_bn_into_weights(quantize_layer_bn(m.fc, m.lsb_exp));
    return out;
}

}  // namespace sac
