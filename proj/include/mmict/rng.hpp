#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace mmict {

// FNV-1a, used to derive per-item RNG streams from (seed, key) so that
// parallel and serial runs agree.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, const std::string& key) {
    std::uint64_t h = fnv1a(key);
    h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

inline std::mt19937_64 seeded_rng(std::uint64_t seed, const std::string& key) {
    return std::mt19937_64(mix_seed(seed, key));
}

}  // namespace mmict
