#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace fpsolve {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace detail

/// Stable seed for a named substream of a root seed. All randomness in an
/// experiment flows from one root seed through named substreams, so individual
/// components can be re-run in isolation.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    return detail::splitmix64(root ^ detail::splitmix64(detail::fnv1a(name)));
}

/// Deterministic random stream derived from a root seed and a substream name.
///
/// Every stochastic component (trajectory, noise injection, network init,
/// batch shuffling) pulls from its own named substream so experiments can be
/// re-run piecewise without disturbing each other. Draws are generated from
/// raw mt19937_64 output through fixed arithmetic, so identical (seed, name)
/// gives bit-identical sequences on any platform.
class RngStream {
public:
    RngStream(std::uint64_t root_seed, std::string_view name)
        : gen_(derive_seed(root_seed, name)) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    /// Standard normal via Box-Muller (second value cached).
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        // u1 in (0,1] so the log is finite.
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cache_ = r * std::sin(theta);
        has_cache_ = true;
        return r * std::cos(theta);
    }

    /// Unbiased integer in [0, n) by rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

}  // namespace fpsolve
