#pragma once

// Counter-based deterministic RNG. Sample streams are a pure function of
// (seed, counter), so runs replay bit-for-bit from the seed in the config,
// and split() derives independent streams for parallel or per-purpose use.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "grokalign/numerics.hpp"

namespace grokalign {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

}  // namespace detail

struct RngState {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;

    RngState() = default;
    explicit RngState(std::uint64_t seed) : key(detail::mix64(seed + 0x9E3779B97F4A7C15ULL)) {}

    std::uint64_t next_u64() {
        ++counter;
        return detail::mix64(key + counter * 0x9E3779B97F4A7C15ULL);
    }

    // Independent stream; does not disturb this generator's counter.
    RngState split(std::uint64_t stream) const {
        RngState child;
        child.key = detail::mix64(key ^ detail::mix64(stream + 0xA0761D6478BD642FULL));
        return child;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; one pair drawn per call, partner discarded
    double gaussian() {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
};

// n independent draws from N(0, std^2); pairs of uniforms are consumed in
// order so the stream is a deterministic function of the counter alone.
inline Vector sample_gaussian(RngState& rng, std::size_t n, double std_dev) {
    if (std_dev < 0.0) throw std::invalid_argument("sample_gaussian: negative std");
    Vector out(n, 0.0);
    if (std_dev == 0.0) return out;
    for (std::size_t i = 0; i < n; i += 2) {
        double u1 = rng.uniform();
        const double u2 = rng.uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        out[i] = std_dev * r * std::cos(2.0 * std::numbers::pi * u2);
        if (i + 1 < n) out[i + 1] = std_dev * r * std::sin(2.0 * std::numbers::pi * u2);
    }
    return out;
}

// Uniform draw from the unit sphere in R^n.
inline Vector sample_unit_sphere(RngState& rng, std::size_t n) {
    if (n == 0) throw std::invalid_argument("sample_unit_sphere: n must be positive");
    for (;;) {
        Vector v = sample_gaussian(rng, n, 1.0);
        const double nr = norm2(v);
        if (nr > 1e-100) {
            for (double& x : v) x /= nr;
            return v;
        }
    }
}

}  // namespace grokalign
