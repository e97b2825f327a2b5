#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace advgrad {

/// Deterministic RNG. Gaussian and uniform draws are derived from raw
/// mt19937 output (whose sequence the standard pins down), not from
/// std::*_distribution, so streams reproduce across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

    uint32_t next_u32() { return gen_(); }

    /// Uniform in [0,1) with 32 bits of the engine.
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    /// Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_u32() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mixes a base seed with stream indices (splitmix64 finalizer) so that
/// e.g. (seed, epoch) and (seed, epoch, batch) give unrelated streams.
inline uint64_t mix_seed(uint64_t seed, uint64_t a = 0, uint64_t b = 0) {
    uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace advgrad
