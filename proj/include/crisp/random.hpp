#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace crisp {

/* std::mt19937_64 is fully specified by the standard, the std:: distributions are not.  Everything
 * that feeds a golden value or a serialized artifact draws through these helpers so outputs are the
 * same on every standard library. */
using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection sampling.
inline std::uint64_t uniform_index(Rng &rng, std::uint64_t n)
{
    if (n <= 1) return 0;
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    std::uint64_t x;
    do x = rng(); while (x >= limit);
    return x % n;
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform_real(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller.
inline double standard_normal(Rng &rng)
{
    double u1;
    do u1 = uniform_real(rng); while (u1 <= 0.0);
    const double u2 = uniform_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template<typename T>
void shuffle(std::vector<T> &v, Rng &rng)
{
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng &rng)
{
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p, rng);
    return p;
}

/// Derives an independent stream seed from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}
