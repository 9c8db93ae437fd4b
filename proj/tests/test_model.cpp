#include <doctest.h>

#include <cmath>

#include "sacsim/error.hpp"
#include "sacsim/model.hpp"
#include "sacsim/oracle.hpp"

using namespace sac;

namespace {

// Extended-precision reference for the batch-norm quantization.
FoldedAffine brute_quantize_bn(long double mu, long double sigma, long double beta, int lsb_exp) {
    const long double l = std::log2l(1.0L / sigma);
    int best = -40;
    for (int k = -40; k <= 40; ++k) {
        if (std::fabs(l - k) <= std::fabs(l - best)) best = k;
    }
    const long double bias = (beta - mu / sigma) * std::ldexp(1.0L, 6 - lsb_exp);
    return {best, static_cast<std::int32_t>(std::llroundl(bias))};
}

LayerSpec random_layer(oracle::Rng& rng, std::size_t f, std::size_t c, int min_exp) {
    LayerSpec layer;
    layer.filters = f;
    layer.channels = c;
    layer.weights = WeightMatrix(f, c);
    for (std::size_t r = 0; r < f; ++r)
        for (std::size_t k = 0; k < c; ++k)
            if (rng.uniform(0, 2) != 0)
                layer.weights.at(r, k) = PowTwoWeight::value(rng.uniform(0, 1) ? 1 : -1,
                                                             static_cast<int>(rng.uniform(min_exp, 0)));
    return layer;
}

}  // namespace

TEST_CASE("quantize_bn examples") {
    CHECK(quantize_bn({0.0, 2.0, 0.0}, 0) == FoldedAffine{-1, 0});
    CHECK(quantize_bn({1.0, 1.0, 1.0}, 0) == FoldedAffine{0, 0});

    const auto got = quantize_bn({0.2, 0.7, 0.1}, 0);
    const auto want = brute_quantize_bn(0.2L, 0.7L, 0.1L, 0);
    CHECK(got == want);
    CHECK(want == FoldedAffine{1, -12});  // log2(1/0.7) = 0.515, (0.1 - 0.2857) * 64 = -11.89
}

TEST_CASE("quantize_bn agrees with the extended-precision reference") {
    oracle::Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double mu = rng.real() * 4 - 2, sigma = 0.05 + rng.real() * 8, beta = rng.real() * 2 - 1;
        const int lsb = static_cast<int>(rng.uniform(-3, 2));
        CHECK(quantize_bn({mu, sigma, beta}, lsb) ==
              brute_quantize_bn(mu, sigma, beta, lsb));
    }
}

TEST_CASE("quantize_bn errors") {
    CHECK_THROWS_AS(quantize_bn({0.0, 0.0, 0.0}, 0), RangeError);
    CHECK_THROWS_AS(quantize_bn({0.0, 1.0, 1e9}, 0), RangeError);
    // lsb_exp shifts the bias unit: beta = 1 at lsb 2^2 is 16 accumulator units
    CHECK(quantize_bn({0.0, 1.0, 1.0}, 2).bias_fx == 16);
}

TEST_CASE("fold_bn_into_weights examples") {
    LayerSpec layer;
    layer.filters = 1;
    layer.channels = 2;
    layer.weights = WeightMatrix(1, 2);
    layer.weights.at(0, 0) = PowTwoWeight::value(1, -1);
    layer.bn = std::vector<FoldedAffine>{{-2, 17}};
    const auto folded = fold_bn_into_weights(layer);
    CHECK(folded.weights.at(0, 0) == PowTwoWeight::value(1, -3));
    CHECK(folded.weights.at(0, 1).is_zero());
    CHECK(folded.folded_bn()[0] == FoldedAffine{0, 17});

    layer.bn = std::vector<FoldedAffine>{{-6, 0}};
    CHECK_THROWS_AS(fold_bn_into_weights(layer), RangeError);
    layer.bn = std::vector<FoldedAffine>{{2, 0}};
    CHECK_THROWS_AS(fold_bn_into_weights(layer), RangeError);
    layer.bn = std::vector<BnParams>{{0.0, 1.0, 0.0}};
    CHECK_THROWS(fold_bn_into_weights(layer));
}

TEST_CASE("folding commutes with inference") {
    oracle::Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        auto layer = random_layer(rng, 8, 8, -3);
        std::vector<FoldedAffine> bn(8);
        for (auto& a : bn) a = {static_cast<int>(rng.uniform(-3, 0)), static_cast<std::int32_t>(rng.uniform(-500, 500))};
        layer.bn = bn;
        const auto x = oracle::gen_image(static_cast<std::uint64_t>(trial), {8, 3, 3});

        const auto unfolded = oracle::ref_matmul(layer.weights, x);
        const auto folded = oracle::ref_matmul(fold_bn_into_weights(layer).weights, x);
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t p = 0; p < unfolded.positions; ++p)
                CHECK(apply_pow2_scale(unfolded.at(r, p), bn[r].scale_exp) == folded.at(r, p));
    }
}

TEST_CASE("apply_pow2_scale") {
    CHECK(apply_pow2_scale(12, -2) == 3);
    CHECK(apply_pow2_scale(-12, -2) == -3);
    CHECK(apply_pow2_scale(3, 3) == 24);
    CHECK_THROWS_AS(apply_pow2_scale(13, -2), RangeError);
}

TEST_CASE("validate_manifest") {
    oracle::Topology t;
    t.input_shape = {3, 8, 8};
    t.layers = {{8, 1, 4}, {16, 2, 2}};
    auto m = oracle::gen_synthetic(1, t);
    CHECK_NOTHROW(validate_manifest(m));
    CHECK(m.matmul_dims() == std::vector<std::pair<std::size_t, std::size_t>>{{8, 8}, {4, 4}, {4, 4}});

    auto bad = m;
    bad.layers[1].channels = 7;
    bad.layers[1].weights = WeightMatrix(16, 7);
    bad.layers[1].shift_dirs.resize(7);
    CHECK_THROWS_WITH_AS(validate_manifest(bad), doctest::Contains("layers[1].c"), ManifestError);

    bad = m;
    bad.layers[0].groups = 3;
    CHECK_THROWS_WITH_AS(validate_manifest(bad), doctest::Contains("layers[0].g"), ManifestError);

    bad = m;
    bad.layers[0].bn = std::vector<BnParams>(8, BnParams{0.0, 0.0, 0.0});
    CHECK_THROWS_WITH_AS(validate_manifest(bad), doctest::Contains("bn.sigma must be > 0"), ManifestError);

    bad = m;
    bad.layers[0].has_shift = true;
    bad.layers[0].shift_dirs = round_robin_shifts(3);
    CHECK_THROWS_AS(validate_manifest(bad), ManifestError);

    bad = m;
    bad.fc.channels = 3;
    CHECK_THROWS_AS(validate_manifest(bad), ManifestError);
}

TEST_CASE("fold_model leaves unit scales") {
    oracle::Topology t;
    t.layers = {{8, 1, 2}, {8, 1, 1}};
    const auto m = oracle::gen_synthetic(9, t);
    const auto f = fold_model(m);
    for (const auto& layer : f.layers)
        for (const auto& a : layer.folded_bn()) CHECK(a.scale_exp == 0);
    CHECK(f.layers[0].folded_bn()[3].bias_fx == m.layers[0].folded_bn()[3].bias_fx);
}
