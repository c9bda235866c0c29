#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace tracegan {

/// Seeded random source with platform-independent samplers.
///
/// The standard distributions are implementation-defined, so every sampler
/// here is written against the raw 64-bit output of std::mt19937_64. The
/// same seed therefore yields the same stream on every toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    double exponential(double rate);

    /// Index drawn proportionally to non-negative weights (need not be normalized).
    std::size_t categorical(std::span<const double> weights);

    /// Independent child stream; the same (parent seed, stream) always gives the same child.
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace tracegan
