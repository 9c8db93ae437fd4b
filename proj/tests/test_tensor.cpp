#include <doctest.h>

#include <algorithm>

#include "sacsim/error.hpp"
#include "sacsim/oracle.hpp"
#include "sacsim/tensor.hpp"

using namespace sac;

TEST_CASE("reshape_input shapes") {
    const QuantTensor img = oracle::gen_image(1, {3, 224, 224});
    CHECK(reshape_input(img, 2).shape() == Shape3{12, 112, 112});
    CHECK(reshape_input(img, 4).shape() == Shape3{48, 56, 56});
    CHECK(reshape_input(img, 1) == img);
    CHECK_THROWS_AS(reshape_input(oracle::gen_image(1, {3, 6, 8}), 4), ShapeError);
    CHECK_THROWS_AS(reshape_input(img, 3), ShapeError);
}

TEST_CASE("reshape_input places pixels per the group formula") {
    const QuantTensor img = oracle::gen_image(2, {3, 8, 8});
    for (int r : {2, 4}) {
        const auto out = reshape_input(img, r);
        const auto ur = static_cast<std::size_t>(r);
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < 8; ++y)
                for (std::size_t x = 0; x < 8; ++x)
                    CHECK(out.at(3 * ((y % ur) * ur + (x % ur)) + ch, y / ur, x / ur) == img.at(ch, y, x));
    }
    // 2x2 block of channel 0: top-left goes to group 0, top-right to group 1, ...
    QuantTensor t({1, 2, 2}, {1, 2, 3, 4});
    const auto o = reshape_input(t, 2);
    CHECK(o.shape() == Shape3{4, 1, 1});
    CHECK(std::vector<std::uint8_t>(o.values().begin(), o.values().end()) == std::vector<std::uint8_t>{1, 2, 3, 4});
}

TEST_CASE("reshape_input is a bijection") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const QuantTensor img = oracle::gen_image(seed, {3, 16, 24});
        for (int r : {1, 2, 4}) {
            const auto out = reshape_input(img, r);
            CHECK(restore_input(out, r, 3) == img);
            std::vector<std::uint8_t> a(img.values().begin(), img.values().end());
            std::vector<std::uint8_t> b(out.values().begin(), out.values().end());
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            CHECK(a == b);
        }
    }
}

TEST_CASE("channel_shift identity and single shift") {
    const QuantTensor img = oracle::gen_image(3, {4, 5, 5});
    const std::vector<ShiftOffset> zero(4);
    CHECK(channel_shift(img, zero) == img);

    QuantTensor t({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const std::vector<ShiftOffset> right{{0, 1}};
    const auto s = channel_shift(t, right);
    CHECK(std::vector<std::uint8_t>(s.values().begin(), s.values().end()) ==
          std::vector<std::uint8_t>{0, 1, 2, 0, 4, 5, 0, 7, 8});
    CHECK_THROWS_AS(channel_shift(t, zero), ShapeError);
}

TEST_CASE("channel_shift matches a padded-gather oracle") {
    // Oracle: embed every channel in a zero border of width 1, then read the
    // source pixel at (y + 1 - dy, x + 1 - dx).
    const Shape3 shape{9, 6, 7};
    const QuantTensor img = oracle::gen_image(4, shape);
    const auto dirs = round_robin_shifts(9);
    const auto out = channel_shift(img, dirs);
    const std::size_t ph = shape.height + 2, pw = shape.width + 2;
    for (std::size_t c = 0; c < 9; ++c) {
        std::vector<int> padded(ph * pw, 0);
        for (std::size_t y = 0; y < shape.height; ++y)
            for (std::size_t x = 0; x < shape.width; ++x) padded[(y + 1) * pw + x + 1] = img.at(c, y, x);
        for (std::size_t y = 0; y < shape.height; ++y) {
            for (std::size_t x = 0; x < shape.width; ++x) {
                const auto sy = static_cast<std::size_t>(static_cast<int>(y) + 1 - dirs[c].dy);
                const auto sx = static_cast<std::size_t>(static_cast<int>(x) + 1 - dirs[c].dx);
                CHECK(out.at(c, y, x) == padded[sy * pw + sx]);
            }
        }
    }
    CHECK(out.shape() == shape);
}

TEST_CASE("round robin directions") {
    const auto d = round_robin_shifts(11);
    CHECK(d[0] == ShiftOffset{-1, -1});
    CHECK(d[4] == ShiftOffset{0, 0});
    CHECK(d[8] == ShiftOffset{1, 1});
    CHECK(d[9] == ShiftOffset{-1, -1});
}

TEST_CASE("subsample") {
    const QuantTensor img = oracle::gen_image(5, {2, 5, 4});
    const auto s = subsample(img, 2);
    CHECK(s.shape() == Shape3{2, 3, 2});
    CHECK(s.at(1, 2, 1) == img.at(1, 4, 2));
    CHECK(subsample(img, 1) == img);
}

TEST_CASE("raw tensor file") {
    const QuantTensor img = oracle::gen_image(6, {3, 4, 2});
    const auto bytes = serialize_tensor(img);
    REQUIRE(bytes.size() == 12 + 24);
    CHECK(bytes[0] == 3);
    CHECK(bytes[4] == 4);
    CHECK(bytes[8] == 2);
    CHECK(parse_tensor(bytes) == img);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(parse_tensor(truncated), FormatError);
    CHECK_THROWS_AS(parse_tensor(std::vector<std::uint8_t>{1, 0, 0}), FormatError);
}
