#include <catch2/catch_amalgamated.hpp>

#include "fpsolve/rng.hpp"

using fpsolve::RngStream;

TEST_CASE("named substreams are deterministic and independent", "[rng]") {
    RngStream a(42, "trajectory");
    RngStream b(42, "trajectory");
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    RngStream c(42, "noise");
    RngStream d(43, "trajectory");
    REQUIRE(RngStream(42, "trajectory").next_u64() != c.next_u64());
    REQUIRE(RngStream(42, "trajectory").next_u64() != d.next_u64());
}

TEST_CASE("uniform01 stays in [0,1) with the right mean", "[rng]") {
    RngStream r(7, "u");
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = r.uniform01();
        REQUIRE(x >= 0.0);
        REQUIRE(x < 1.0);
        sum += x;
    }
    // mean 1/2, std of the mean = 1/sqrt(12 n)
    REQUIRE(std::abs(sum / n - 0.5) < 5.0 / std::sqrt(12.0 * n));
}

TEST_CASE("normal draws have unit variance and zero mean", "[rng]") {
    RngStream r(7, "n");
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sumsq += x * x;
    }
    REQUIRE(std::abs(sum / n) < 5.0 / std::sqrt(static_cast<double>(n)));
    REQUIRE(std::abs(sumsq / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("shuffle is a permutation and seed-stable", "[rng]") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    RngStream r(11, "shuffle");
    r.shuffle(v);
    auto w = v;
    std::sort(w.begin(), w.end());
    for (int i = 0; i < 50; ++i) REQUIRE(w[i] == i);

    std::vector<int> v2(50);
    for (int i = 0; i < 50; ++i) v2[i] = i;
    RngStream r2(11, "shuffle");
    r2.shuffle(v2);
    REQUIRE(v == v2);
}
