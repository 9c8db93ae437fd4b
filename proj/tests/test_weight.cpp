#include <doctest.h>

#include <cmath>

#include "sacsim/error.hpp"
#include "sacsim/oracle.hpp"
#include "sacsim/weight.hpp"

using namespace sac;

namespace {

// Brute force: the exponent k in [-6, 0] closest to log2|x| in extended precision,
// ties to the larger k; Zero below 2^-6.5.
PowTwoWeight brute_log_quantize(double x) {
    if (x == 0.0) return PowTwoWeight::zero();
    const long double l = std::log2l(std::fabs(static_cast<long double>(x)));
    if (l < -6.5L) return PowTwoWeight::zero();
    int best = -6;
    long double best_d = std::fabs(l - best);
    for (int k = -5; k <= 0; ++k) {
        const long double d = std::fabs(l - k);
        if (d <= best_d) {
            best = k;
            best_d = d;
        }
    }
    return PowTwoWeight::value(x < 0 ? -1 : 1, best);
}

}  // namespace

TEST_CASE("log_quantize examples") {
    CHECK(log_quantize(0.5) == PowTwoWeight::value(1, -1));
    CHECK(log_quantize(0.0).is_zero());
    // log2(0.3) = -1.737 -> -2
    CHECK(log_quantize(0.3) == brute_log_quantize(0.3));
    CHECK(log_quantize(0.3) == PowTwoWeight::value(1, -2));
    CHECK(log_quantize(-0.3) == PowTwoWeight::value(-1, -2));
}

TEST_CASE("log_quantize range ends") {
    CHECK(log_quantize(8.0) == PowTwoWeight::value(1, 0));
    CHECK(log_quantize(-1e30) == PowTwoWeight::value(-1, 0));
    CHECK(log_quantize(1.0) == PowTwoWeight::value(1, 0));
    CHECK(log_quantize(1.0 / 64) == PowTwoWeight::value(1, -6));

    const double threshold = std::ldexp(M_SQRT1_2, -6);  // ~2^-6.5
    CHECK(log_quantize(std::nextafter(threshold, 0.0)).is_zero());
    CHECK(log_quantize(std::nextafter(threshold, 1.0)) == PowTwoWeight::value(1, -6));
    CHECK(log_quantize(1e-300).is_zero());
}

TEST_CASE("log_quantize rounds at the geometric midpoint") {
    for (int k = -6; k < 0; ++k) {
        const double mid = std::ldexp(M_SQRT2, k);  // 2^(k + 0.5), rounded to double
        CHECK(log_quantize(std::nextafter(mid, 0.0)).exponent() == k);
        CHECK(log_quantize(std::nextafter(mid, 10.0)).exponent() == k + 1);
    }
}

TEST_CASE("log_quantize matches the brute-force nearest exponent") {
    oracle::Rng rng(7);
    for (int i = 0; i < 20000; ++i) {
        const double x = (rng.real() * 2.0 - 1.0) * std::ldexp(1.0, static_cast<int>(rng.uniform(-9, 2)));
        CHECK(log_quantize(x) == brute_log_quantize(x));
    }
}

TEST_CASE("log_quantize is idempotent on its outputs") {
    oracle::Rng rng(11);
    for (int i = 0; i < 5000; ++i) {
        const double x = (rng.real() * 4.0 - 2.0);
        const auto q = log_quantize(x);
        CHECK(log_quantize(q.to_double()) == q);
    }
}

TEST_CASE("PowTwoWeight construction and scaling") {
    CHECK_THROWS_AS(PowTwoWeight::value(1, 1), RangeError);
    CHECK_THROWS_AS(PowTwoWeight::value(1, -7), RangeError);
    CHECK_THROWS_AS(PowTwoWeight::value(0, -1), RangeError);
    CHECK(PowTwoWeight::value(-1, -2).to_double() == -0.25);
    // 2^-2 * 10 data LSBs = 2.5 LSBs = 160 accumulator units
    CHECK(PowTwoWeight::value(1, -2).scale(10) == 160);
    CHECK(PowTwoWeight::value(-1, 0).scale(3) == -192);
    CHECK(PowTwoWeight::zero().scale(200) == 0);
    CHECK(PowTwoWeight::value(-1, -3).to_string() == "-2^-3");
}

TEST_CASE("nearest_log2 is unclamped") {
    CHECK(nearest_log2(1024.0) == 10);
    CHECK(nearest_log2(1.0 / 0.7) == 1);  // log2(1.4286) = 0.515
    CHECK(nearest_log2(1.0 / 3.0) == -2);  // -1.585
    CHECK_THROWS(nearest_log2(0.0));
}
