#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hire {

using Rng = std::mt19937_64;

// Uniform integer in [0, n). Avoids std::uniform_int_distribution so that
// sequences are identical across standard library implementations.
inline std::uint64_t rand_index(Rng& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("rand_index: empty range");
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

// Uniform real in [0, 1).
inline double rand_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform real in [lo, hi).
inline double rand_real(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rand_real(rng);
}

// Fisher-Yates shuffle driven by rand_index for portable determinism.
template <class V>
void shuffle_vec(V& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rand_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Sample k distinct elements of [0, n) in random order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    shuffle_vec(pool, rng);
    pool.resize(std::min(n, k));
    return pool;
}

}  // namespace hire
