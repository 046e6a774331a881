#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace gnnpp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// 53-bit mantissa double in [0, 1).
inline double u64_to_unit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Double in (0, 1]; safe as a log() argument.
inline double u64_to_unit_open(std::uint64_t x) {
    return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
}

// Deterministic seedable stream. Wraps mt19937_64 (sequence pinned by the
// standard) and derives all variates from raw 64-bit draws so results do
// not depend on library-specific distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform01() { return u64_to_unit(next_u64()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double gaussian() {
        const double u1 = u64_to_unit_open(next_u64());
        const double u2 = u64_to_unit(next_u64());
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, bound); bound >= 1. Rejection-free modulo is
    // fine here: bound is tiny relative to 2^64 so the bias is negligible,
    // and the sequence stays platform-stable.
    std::uint64_t uniform_int(std::uint64_t bound) { return next_u64() % bound; }

    // Fisher-Yates; std::shuffle is implementation-defined, this is not.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

  private:
    std::mt19937_64 engine_;
};

// Counter-based variates: each value is a pure function of (seed, stream,
// indices), so a dataset slice is reproducible regardless of which other
// slices were generated. Used by the synthetic generator.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t stream, std::uint64_t a = 0, std::uint64_t b = 0,
                       std::uint64_t c = 0, std::uint64_t d = 0) const {
        std::uint64_t h = splitmix64(seed_ ^ (stream * 0xd6e8feb86659fd93ULL));
        h = splitmix64(h ^ (a * 0xa0761d6478bd642fULL));
        h = splitmix64(h ^ (b * 0xe7037ed1a0b428dbULL));
        h = splitmix64(h ^ (c * 0x8ebc6af09c88c6e3ULL));
        h = splitmix64(h ^ (d * 0x589965cc75374cc3ULL));
        return h;
    }

    double uniform01(std::uint64_t stream, std::uint64_t a = 0, std::uint64_t b = 0,
                     std::uint64_t c = 0, std::uint64_t d = 0) const {
        return u64_to_unit(bits(stream, a, b, c, d));
    }

    double gaussian(std::uint64_t stream, std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0, std::uint64_t d = 0) const {
        const std::uint64_t r = bits(stream, a, b, c, d);
        const double u1 = u64_to_unit_open(r);
        const double u2 = u64_to_unit(splitmix64(r ^ 0x94d049bb133111ebULL));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

  private:
    std::uint64_t seed_;
};

}  // namespace gnnpp
