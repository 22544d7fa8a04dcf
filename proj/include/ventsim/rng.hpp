#pragma once

#include <cstdint>
#include <random>

namespace ventsim {

/// SplitMix64 finalizer. Used to derive independent per-record seeds:
/// seed_i = mix_seed(master, i) = splitmix64(master ^ splitmix64(i + 1)).
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index)
{
    return splitmix64(master ^ splitmix64(index + 1));
}

/// Portable random stream. std::mt19937_64 output is fixed by the standard;
/// the distributions below are written out so results do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no cached second variate).
    double normal();

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace ventsim
