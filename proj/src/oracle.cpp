#include "sacsim/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "sacsim/error.hpp"
#include "sacsim/fixed_point.hpp"

namespace sac::oracle {

std::uint64_t Rng::next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::int64_t Rng::uniform(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next() % span);
}

double Rng::real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

RefTensor ref_matmul(const WeightMatrix& w, const QuantTensor& input) {
    const auto& s = input.shape();
    if (s.channels != w.cols()) {
        throw ShapeError("ref_matmul: " + std::to_string(w.cols()) + " weight columns vs " +
                         std::to_string(s.channels) + " input channels");
    }
    RefTensor out{w.rows(), s.plane(), std::vector<std::int64_t>(w.rows() * s.plane(), 0)};
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t p = 0; p < s.plane(); ++p) {
            std::int64_t sum = 0;
            for (std::size_t c = 0; c < w.cols(); ++c) {
                const auto wt = w.at(r, c);
                if (wt.is_zero()) continue;
                const std::int64_t x = input.channel(c)[p];
                const std::int64_t shifted = x << (wt.exponent() + kAccFracBits);
                sum += wt.sign() < 0 ? -shifted : shifted;
            }
            out.at(r, p) = sum;
        }
    }
    return out;
}

RefTensor ref_matmul(const PackedLayer& packed, const QuantTensor& input) {
    const auto& s = input.shape();
    if (s.channels > packed.channels()) {
        throw ShapeError("ref_matmul: input has more channels than the packed layer spans");
    }
    RefTensor out{packed.rows, s.plane(), std::vector<std::int64_t>(packed.rows * s.plane(), 0)};
    for (std::size_t r = 0; r < packed.rows; ++r) {
        for (std::size_t c = 0; c < packed.cols; ++c) {
            const auto [index, wt] = decode_cell(packed.cell(r, c));
            if (wt.is_zero()) continue;
            const std::size_t ch = c * packed.group_size + index;
            if (ch >= s.channels) continue;  // padding channel, always zero
            for (std::size_t p = 0; p < s.plane(); ++p) {
                const std::int64_t shifted = std::int64_t{input.channel(ch)[p]} << (wt.exponent() + kAccFracBits);
                out.at(r, p) += wt.sign() < 0 ? -shifted : shifted;
            }
        }
    }
    return out;
}

WeightMatrix prune_groups(const WeightMatrix& w, int groups) {
    const auto g = static_cast<std::size_t>(groups);
    WeightMatrix out(w.rows(), w.cols());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t start = 0; start < w.cols(); start += g) {
            std::size_t best = w.cols();
            double best_mag = 0.0;
            for (std::size_t c = start; c < std::min(start + g, w.cols()); ++c) {
                const double mag = std::fabs(w.at(r, c).to_double());
                if (mag > best_mag) {
                    best_mag = mag;
                    best = c;
                }
            }
            if (best < w.cols()) out.at(r, best) = w.at(r, best);
        }
    }
    return out;
}

RefResult ref_forward(const ModelManifest& m, const QuantTensor& image) {
    if (image.shape() != m.input_shape) throw ShapeError("ref_forward: image does not match input_shape");
    RefResult result;
    QuantTensor x = reshape_input(image, m.reshape_factor);
    for (const auto& raw : m.layers) {
        const LayerSpec layer = quantize_layer_bn(raw, m.lsb_exp);
        if (layer.has_shift) x = channel_shift(x, layer.shift_dirs);
        x = subsample(x, layer.stride);
        const auto acc = ref_matmul(prune_groups(layer.weights, layer.groups), x);
        const auto& bn = layer.folded_bn();
        QuantTensor y({layer.filters, x.shape().height, x.shape().width}, x.lsb_exp());
        for (std::size_t r = 0; r < layer.filters; ++r) {
            for (std::size_t p = 0; p < acc.positions; ++p) {
                const std::int64_t v = apply_pow2_scale(acc.at(r, p), bn[r].scale_exp) + bn[r].bias_fx;
                y.values()[r * acc.positions + p] = relu_quantize(v);
            }
        }
        x = std::move(y);
        result.activations.push_back(x);
    }
    const LayerSpec fc = quantize_layer_bn(m.fc, m.lsb_exp);
    result.fc_outputs = ref_matmul(prune_groups(fc.weights, fc.groups), x);
    result.logits.assign(fc.filters, 0);
    for (std::size_t r = 0; r < fc.filters; ++r) {
        for (std::size_t p = 0; p < result.fc_outputs.positions; ++p) result.logits[r] += result.fc_outputs.at(r, p);
    }
    return result;
}

namespace {

LayerSpec synth_layer(Rng& rng, std::size_t filters, std::size_t channels, int stride, int groups, double density,
                      bool is_fc) {
    LayerSpec layer;
    layer.filters = filters;
    layer.channels = channels;
    layer.stride = stride;
    layer.groups = groups;
    layer.weights = WeightMatrix(filters, channels);
    std::vector<FoldedAffine> bn(filters);
    const auto g = static_cast<std::size_t>(groups);
    for (std::size_t r = 0; r < filters; ++r) {
        if (!is_fc) bn[r] = {static_cast<int>(-rng.uniform(0, 1)), static_cast<std::int32_t>(rng.uniform(-2048, 4096))};
        for (std::size_t start = 0; start < channels; start += g) {
            if (rng.real() >= density) continue;
            const auto width = static_cast<std::int64_t>(std::min(g, channels - start));
            const auto ch = start + static_cast<std::size_t>(rng.uniform(0, width - 1));
            const int sign = rng.uniform(0, 1) == 0 ? 1 : -1;
            // Leaves room for a 2^-1 batch-norm scale to fold into the weight.
            const int lo = is_fc ? kMinExponent : kMinExponent + 1;
            layer.weights.at(r, ch) = PowTwoWeight::value(sign, static_cast<int>(rng.uniform(lo, kMaxExponent)));
        }
    }
    layer.bn = std::move(bn);
    return layer;
}

}  // namespace

ModelManifest gen_synthetic(std::uint64_t seed, const Topology& topo) {
    if (topo.layers.empty()) throw std::invalid_argument("gen_synthetic: topology has no layers");
    Rng rng(seed);
    ModelManifest m;
    m.input_shape = topo.input_shape;
    m.reshape_factor = topo.reshape_factor;
    m.clock_mhz = topo.clock_mhz;
    std::size_t channels = m.reshaped_shape().channels;
    for (std::size_t i = 0; i < topo.layers.size(); ++i) {
        const auto& ls = topo.layers[i];
        auto layer = synth_layer(rng, ls.filters, channels, ls.stride, ls.groups, topo.density, false);
        if (i > 0) {
            layer.has_shift = true;
            layer.shift_dirs = round_robin_shifts(channels);
        }
        m.layers.push_back(std::move(layer));
        channels = ls.filters;
    }
    m.fc = synth_layer(rng, topo.classes, channels, 1, topo.fc_groups, topo.density, true);
    validate_manifest(m);
    return m;
}

Topology random_topology(std::uint64_t seed, std::size_t max_layers, std::size_t max_channels) {
    Rng rng(seed ^ 0x5ac5ac5ac5ac5acULL);
    static constexpr int kGroups[] = {1, 2, 4, 8};
    Topology t;
    t.reshape_factor = static_cast<int>(1 << rng.uniform(0, 2));
    const auto side = static_cast<std::size_t>(t.reshape_factor * rng.uniform(2, 4) * (t.reshape_factor == 1 ? 2 : 1));
    t.input_shape = {static_cast<std::size_t>(rng.uniform(1, 3)), side, side};
    std::size_t h = side / static_cast<std::size_t>(t.reshape_factor);
    const auto count = static_cast<std::size_t>(rng.uniform(1, static_cast<std::int64_t>(max_layers)));
    for (std::size_t i = 0; i < count; ++i) {
        LayerShape ls;
        ls.filters = static_cast<std::size_t>(rng.uniform(1, static_cast<std::int64_t>(max_channels)));
        ls.groups = kGroups[rng.uniform(0, 3)];
        ls.stride = (h > 2 && rng.uniform(0, 3) == 0) ? 2 : 1;
        h = (h + static_cast<std::size_t>(ls.stride) - 1) / static_cast<std::size_t>(ls.stride);
        t.layers.push_back(ls);
    }
    t.classes = static_cast<std::size_t>(rng.uniform(2, 16));
    t.fc_groups = kGroups[rng.uniform(0, 3)];
    return t;
}

Topology imagenet_small56() {
    Topology t;
    t.input_shape = {3, 224, 224};
    t.reshape_factor = 4;
    t.clock_mhz = 170.0;
    t.layers = {
        {64, 1, 2},  {64, 1, 2},  {128, 2, 2}, {128, 1, 2}, {128, 1, 4},                           // 56 -> 28
        {256, 2, 4}, {256, 1, 4}, {256, 1, 8}, {256, 1, 8}, {256, 1, 8}, {256, 1, 8}, {256, 1, 8},  // 14
        {256, 1, 8}, {512, 2, 8}, {512, 1, 8}, {512, 1, 8}, {512, 1, 8}, {512, 1, 8}, {512, 1, 8},  // 7
    };
    t.classes = 1000;
    t.fc_groups = 8;
    return t;
}

QuantTensor gen_image(std::uint64_t seed, const Shape3& shape, double zero_fraction) {
    Rng rng(seed);
    QuantTensor t(shape);
    for (auto& v : t.values()) {
        if (zero_fraction > 0.0 && rng.real() < zero_fraction) {
            v = 0;
        } else {
            v = static_cast<std::uint8_t>(rng.uniform(zero_fraction > 0.0 ? 1 : 0, 255));
        }
    }
    return t;
}

}  // namespace sac::oracle
