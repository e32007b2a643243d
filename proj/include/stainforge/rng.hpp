#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stainforge {

// SplitMix64 finalizer; used to mix seeds and derive substreams.
uint64_t mix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);
uint64_t combine_seed(uint64_t a, uint64_t b);

// Seeded deterministic generator (mt19937_64 engine with fixed bit-level
// mappings to doubles, so a given seed always yields the same stream).
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }
    uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
    uint64_t below(uint64_t n);

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Box-Muller; keeps the spare draw.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Independent substream derived from this generator's seed and a tag.
    Rng derive(uint64_t tag) const { return Rng(combine_seed(seed_, tag)); }
    Rng derive(std::string_view tag) const { return derive(fnv1a64(tag)); }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace stainforge
