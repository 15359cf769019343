// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace caicl {

/// 64-bit FNV-1a. Used for digests and for turning stream labels into seed material.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept
{
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Order-sensitive seed derivation: derive_seed(s, a, b) != derive_seed(s, b, a).
inline std::uint64_t derive_seed(std::uint64_t seed) noexcept { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) noexcept
{
    return derive_seed(splitmix64(seed) ^ splitmix64(next + 0x632be59bd9b4e019ULL), rest...);
}

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, Rest... rest) noexcept
{
    return derive_seed(seed, fnv1a64(label), rest...);
}

/// Seeded generator with platform-independent derived draws.
///
/// std::mt19937_64 output is fixed by the standard, but the standard
/// distributions are not, so conversions to doubles and indices are done here.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t index(std::uint64_t n)
    {
        // Lemire-free rejection keeps this exact and portable.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Independent child generator for a named sub-stream.
    Rng split(std::string_view label) { return Rng(derive_seed(next_u64(), label)); }

private:
    std::mt19937_64 engine_;
};

template <typename Vec>
void shuffle(Vec& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.index(i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

} // namespace caicl
