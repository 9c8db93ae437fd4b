#include <doctest.h>

#include <cmath>

#include "sacsim/manifest.hpp"
#include "sacsim/oracle.hpp"
#include "sacsim/packer.hpp"

using namespace sac;

TEST_CASE("identity weights reproduce the input") {
    WeightMatrix w(4, 4);
    for (std::size_t i = 0; i < 4; ++i) w.at(i, i) = PowTwoWeight::value(1, 0);
    const auto x = oracle::gen_image(1, {4, 3, 3});
    const auto out = oracle::ref_matmul(w, x);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t p = 0; p < 9; ++p) CHECK(out.at(c, p) == 64 * x.channel(c)[p]);
}

TEST_CASE("basis input selects one routed weight") {
    // Channel 1 only: row 0 keeps -2^-1 at channel 1, so it sees -x/2.
    const auto m = fold_model(load_manifest_file(std::string(SACSIM_DATA_DIR) + "/cell_example.json"));
    const auto p = combine_columns(m.layers[0]);
    QuantTensor x({8, 1, 1});
    x.values()[1] = 100;
    const auto out = oracle::ref_matmul(p, x);
    CHECK(out.at(0, 0) == -50 * 64);
    CHECK(out.at(7, 0) == 100 * 8);  // +2^-3 at channel 1
    CHECK(out.at(1, 0) == 0);
}

TEST_CASE("packed, sparse and real-valued matmuls agree") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        oracle::Topology t;
        t.input_shape = {16, 3, 3};
        t.layers = {{10, 1, static_cast<int>(1u << (seed % 4))}};
        const auto m = fold_model(oracle::gen_synthetic(seed, t));
        const auto& layer = m.layers[0];
        const auto x = oracle::gen_image(seed, t.input_shape);
        const auto sparse = oracle::ref_matmul(layer.weights, x);
        const auto packed = oracle::ref_matmul(combine_columns(layer), x);
        CHECK(sparse.values == packed.values);
        for (std::size_t r = 0; r < 10; ++r)
            for (std::size_t p = 0; p < 9; ++p) {
                double real = 0;
                for (std::size_t c = 0; c < 16; ++c) real += layer.weights.at(r, c).to_double() * x.channel(c)[p];
                CHECK(static_cast<double>(sparse.at(r, p)) == real * 64.0);
            }
    }
}

TEST_CASE("gen_synthetic is deterministic") {
    const auto t = oracle::random_topology(42, 4, 32);
    const auto a = dump_manifest(oracle::gen_synthetic(42, t));
    CHECK(a == dump_manifest(oracle::gen_synthetic(42, t)));
    CHECK(a != dump_manifest(oracle::gen_synthetic(43, t)));
    CHECK(oracle::gen_image(5, {3, 4, 4}) == oracle::gen_image(5, {3, 4, 4}));
    // Pinned first outputs of the generator.
    oracle::Rng rng(0);
    CHECK(rng.next() == 0xe220a8397b1dcdafULL);
    CHECK(rng.next() == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("synthetic models survive column combining intact") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = fold_model(oracle::gen_synthetic(seed, oracle::random_topology(seed, 4, 40)));
        for (const auto& l : m.layers) CHECK(combine_columns(l).dropped == 0);
        CHECK(combine_columns(m.fc).dropped == 0);
    }
}

TEST_CASE("g=8 synthetic layers are at least 87% zeros") {
    oracle::Topology t;
    t.input_shape = {64, 2, 2};
    t.layers = {{64, 1, 8}};
    const auto m = oracle::gen_synthetic(8, t);
    const auto& w = m.layers[0].weights;
    const double zeros = 1.0 - static_cast<double>(w.nonzeros()) / static_cast<double>(w.rows() * w.cols());
    CHECK(zeros >= 0.87);
}

TEST_CASE("gen_image zero fraction") {
    const auto img = oracle::gen_image(3, {4, 32, 32}, 0.5);
    std::size_t zeros = 0;
    for (auto v : img.values()) zeros += v == 0;
    CHECK(std::fabs(static_cast<double>(zeros) / 4096.0 - 0.5) < 0.05);
}
