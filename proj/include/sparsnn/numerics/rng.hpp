#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sparsnn {

// Seeded generator with a portable uniform/normal mapping. The std
// distributions are implementation-defined, which would make golden files and
// checkpoint hashes depend on the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller; caches the second variate.
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream for one purpose ("init", "mask", "dropout",
    // "poisson", ...). Splitting by name keeps draws of different purposes
    // from interleaving.
    Rng split(std::string_view purpose) const;

    std::uint64_t seed() const { return seed_of_split_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_of_split_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;

    friend Rng make_rng(std::uint64_t seed);
};

// Root generator for a run.
Rng make_rng(std::uint64_t seed);

std::uint64_t splitmix64(std::uint64_t x);

// 64-bit FNV-1a, used for config and checkpoint fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace sparsnn
